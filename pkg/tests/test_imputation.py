import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weaknull.contrast import make_block, make_hypothesis, model_matrix
from weaknull.data import ExperimentDataset
from weaknull.errors import ContrastError, IllConditioned, StratumTargetMismatch
from weaknull.imputation import aggregate_clusters, cluster_hypothesis, impute, solve_z


def test_two_arm_shift():
    tau = 1.7
    z = solve_z(make_block([[1, -1]], [tau]))
    np.testing.assert_allclose(z, [tau / 2, -tau / 2])


def test_factorial_shift_is_scaled_g1():
    G = model_matrix(2).G.astype(float)
    c = 2.5
    z = solve_z(make_block(G[[0]], [c], G[[1, 2]], [0.0, 0.0]))
    np.testing.assert_allclose(z, c * G[0] / 4, atol=1e-14)


def test_ill_conditioned_stack():
    b = make_block([[1, -1, 0]], [0], [[1, -1 + 1e-13, -1e-13]])
    with pytest.raises(IllConditioned):
        solve_z(b)


def test_toy_table(toy):
    table = impute(toy, make_hypothesis([[1, -1]], [1.0]))
    # unit in arm 1 with Y=1: Y(1)=1, Y(2)=0 ; unit in arm 2 with Y=3: Y(1)=4, Y(2)=3
    np.testing.assert_allclose(table.Y_star[0, :, 0], [1, 0])
    np.testing.assert_allclose(table.Y_star[2, :, 0], [4, 3])


@given(st.integers(3, 5), st.integers(0, 2**31))
def test_imputed_table_satisfies_sharp_null(J, seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, J))
    C = rng.normal(size=(m, J))
    C -= C.mean(axis=1, keepdims=True)
    x = rng.normal(size=m)
    treat = np.repeat(np.arange(J), 3)
    data = ExperimentDataset.from_arrays(treat, rng.normal(size=treat.size))
    table = impute(data, make_hypothesis(C, x))
    np.testing.assert_allclose(table.Y_star[:, :, 0] @ C.T, np.tile(x, (data.N, 1)), atol=1e-9)
    np.testing.assert_array_equal(table.observe(data.treatment), data.outcome)
    z = table.z[0, 0]
    assert abs(z.sum()) < 1e-10


def test_stratified_imputation_uses_stratum_targets():
    y = np.arange(8.0) ** 1.5
    data = ExperimentDataset.from_arrays([1, 1, 2, 2] * 2, y, stratum=[0] * 4 + [1] * 4)
    h = make_hypothesis([[1, -1]], [1.0]).with_stratum_targets([[0.0], [2.0]])
    table = impute(data, h)
    diff = table.Y_star[:, 0, 0] - table.Y_star[:, 1, 0]
    np.testing.assert_allclose(diff, [0, 0, 0, 0, 2, 2, 2, 2])


def test_stratum_targets_must_average_to_target():
    data = ExperimentDataset.from_arrays([1, 1, 2, 2] * 2, np.arange(8.0) ** 2, stratum=[0] * 4 + [1] * 4)
    h = make_hypothesis([[1, -1]], [1.0]).with_stratum_targets([[0.0], [1.0]])
    with pytest.raises(StratumTargetMismatch):
        impute(data, h)


def test_arm_count_mismatch(toy):
    with pytest.raises(ContrastError):
        impute(toy, make_hypothesis([[1, -1, 0]]))


def test_vector_outcome_imputation(rng):
    y = rng.normal(size=(9, 2))
    data = ExperimentDataset.from_arrays(np.repeat([0, 1, 2], 3), y)
    from weaknull.contrast import assemble_vector_contrast

    h = assemble_vector_contrast([([[1, -1, 0]], [0.5]), ([[0, 1, -1]], [-1.0])])
    table = impute(data, h)
    np.testing.assert_allclose(table.Y_star[:, 0, 0] - table.Y_star[:, 1, 0], 0.5)
    np.testing.assert_allclose(table.Y_star[:, 1, 1] - table.Y_star[:, 2, 1], -1.0)
    np.testing.assert_array_equal(table.observe(data.treatment), y)


def test_cluster_aggregation():
    data = ExperimentDataset.from_arrays(
        [1, 1, 1, 1, 2, 2, 2],
        [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        cluster=["a", "a", "b", "b", "c", "d", "d"],
    )
    agg = aggregate_clusters(data)
    assert agg.N == 4 and agg.design == "CRE"
    np.testing.assert_array_equal(agg.outcome[:, 0], [3, 7, 5, 13])
    assert agg.meta["n_units"] == 7
    h = cluster_hypothesis(make_hypothesis([[1, -1]], [2.0]), 7, 4)
    np.testing.assert_allclose(h.x, [3.5])
