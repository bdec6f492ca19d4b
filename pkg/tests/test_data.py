import numpy as np
import pytest

from weaknull.data import ExperimentDataset, group_summaries
from weaknull.errors import (
    ArmTooSmall,
    DegenerateVariance,
    DimensionMismatch,
    MixedClusterTreatment,
    StratumCellTooSmall,
    ValidationError,
)


def test_labels_are_sorted_and_coded(toy):
    assert toy.arm_labels == (1, 2)
    assert toy.treatment.tolist() == [0, 0, 1, 1]
    assert toy.design == "CRE"
    assert (toy.N, toy.J, toy.d) == (4, 2, 1)
    assert toy.arm_sizes.tolist() == [2, 2]


def test_arm_order_overrides_sorting():
    d = ExperimentDataset.from_arrays(["b", "b", "a", "a"], [1, 2, 3, 4], arm_order=["b", "a"])
    assert d.treatment.tolist() == [0, 0, 1, 1]


def test_arm_too_small():
    with pytest.raises(ArmTooSmall):
        ExperimentDataset.from_arrays([1, 2, 2], [1.0, 2.0, 3.0])


def test_vector_outcome_needs_d_plus_one_units():
    y = np.arange(8.0).reshape(4, 2)
    with pytest.raises(ArmTooSmall):
        ExperimentDataset.from_arrays([1, 1, 2, 2], y)


def test_single_arm_rejected():
    with pytest.raises(ValidationError):
        ExperimentDataset.from_arrays([1, 1, 1], [1.0, 2.0, 3.0])


def test_length_mismatch():
    with pytest.raises(DimensionMismatch):
        ExperimentDataset.from_arrays([1, 1, 2, 2], [1.0, 2.0, 3.0])


def test_nonfinite_outcome():
    with pytest.raises(ValidationError):
        ExperimentDataset.from_arrays([1, 1, 2, 2], [1.0, np.nan, 3.0, 4.0])


def test_stratum_cell_too_small():
    with pytest.raises(StratumCellTooSmall):
        ExperimentDataset.from_arrays([1, 1, 2, 2, 1, 2], [1, 2, 3, 4, 5, 6.0], stratum=[0, 0, 0, 0, 1, 1])


def test_mixed_cluster():
    with pytest.raises(MixedClusterTreatment):
        ExperimentDataset.from_arrays([1, 2, 1, 1, 2, 2], np.arange(6.0), cluster=["a", "a", "b", "c", "d", "e"])


def test_cluster_arm_needs_two_clusters():
    with pytest.raises(ArmTooSmall):
        ExperimentDataset.from_arrays([1, 1, 2, 2, 2], np.arange(5.0), cluster=["a", "a", "c", "d", "e"])


def test_summaries_match_numpy(rng):
    y = rng.normal(size=30)
    w = np.repeat([0, 1, 2], 10)
    s = group_summaries(ExperimentDataset.from_arrays(w, y))
    for j in range(3):
        assert s.means[j, 0] == pytest.approx(y[w == j].mean(), rel=1e-14)
        assert s.variances[j, 0] == pytest.approx(y[w == j].var(ddof=1), rel=1e-13)
    assert s.d_hat.shape == (3, 3)
    assert s.d_hat[1, 1] == pytest.approx(30 * y[w == 1].var(ddof=1) / 10)
    assert s.grand_mean[0] == pytest.approx(y.mean())


def test_vector_summaries(rng):
    y = rng.normal(size=(12, 2))
    w = np.repeat([0, 1], 6)
    s = group_summaries(ExperimentDataset.from_arrays(w, y))
    np.testing.assert_allclose(s.covs[1], np.cov(y[w == 1], rowvar=False), rtol=1e-12)
    # arm-major stacking
    np.testing.assert_array_equal(s.mean_vector, s.means.reshape(-1))


def test_constant_arm_is_degenerate():
    d = ExperimentDataset.from_arrays([1, 1, 2, 2], [1.0, 1.0, 3.0, 4.0])
    with pytest.raises(DegenerateVariance):
        group_summaries(d)
    assert group_summaries(d, check=False).variances[0, 0] == 0


def test_select_and_merge_arms():
    d = ExperimentDataset.from_arrays([1, 1, 2, 2, 3, 3], [1, 2, 3, 4, 5, 7.0])
    sub = d.select_arms([1, 3])
    assert sub.N == 4 and sub.J == 2
    assert sub.outcome[:, 0].tolist() == [1, 2, 5, 7]
    merged = d.merge_arms([[1], [2, 3]])
    assert merged.J == 2
    assert merged.arm_sizes.tolist() == [2, 4]


def test_with_outcome_keeps_design():
    d = ExperimentDataset.from_arrays([1, 1, 2, 2, 1, 1, 2, 2], np.arange(8.0), stratum=[0] * 4 + [1] * 4)
    e = d.with_outcome(np.arange(8.0) * 2)
    assert e.design == "SRE" and e.H == 2
    assert e.outcome[-1, 0] == 14
