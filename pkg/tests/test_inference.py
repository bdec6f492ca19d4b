import numpy as np
import pytest
from scipy import stats

from conftest import random_dataset
from weaknull import statistics as S
from weaknull.contrast import factorial_contrast, make_hypothesis
from weaknull.data import ExperimentDataset, group_summaries
from weaknull.engine import frt_pvalue
from weaknull.inference import bonferroni_inequalities, confidence_region, hl_estimate


@pytest.fixture
def two_arm(rng):
    return random_dataset(rng, [12, 15], scales=[1, 2])


def test_hl_treatment_control(two_arm):
    s = group_summaries(two_arm)
    est = hl_estimate(two_arm, make_hypothesis([[1, -1]]))
    assert est[0] == pytest.approx(s.means[0, 0] - s.means[1, 0])


def test_hl_factorial_main_effects(rng):
    data = random_dataset(rng, [5, 5, 5, 5])
    G = factorial_contrast(2, [1, 2])
    est = hl_estimate(data, make_hypothesis(G / 2))
    ybar = group_summaries(data).means[:, 0]
    np.testing.assert_allclose(est, (2 / 4) * (G @ ybar))


def test_hl_point_has_p_one(two_arm):
    h = make_hypothesis([[1, -1]])
    res = frt_pvalue(two_arm, h.with_target(hl_estimate(two_arm, h)), "x2", draws=300, seed=0)
    assert res.p_frt == 1.0


def test_hl_cluster_rescaling(rng):
    cluster = np.repeat(np.arange(6), 2)
    treat = np.repeat([0, 1, 0, 1, 0, 1], 2)
    y = rng.normal(size=12)
    data = ExperimentDataset.from_arrays(treat, y, cluster=cluster)
    totals = np.array([y[cluster == c].sum() for c in range(6)])
    arm = treat[::2]
    expected = (6 / 12) * (totals[arm == 0].mean() - totals[arm == 1].mean())
    assert hl_estimate(data, make_hypothesis([[1, -1]]))[0] == pytest.approx(expected)


def test_asymptotic_interval_is_wald(two_arm):
    s = group_summaries(two_arm)
    h = make_hypothesis([[1, -1]])
    region = confidence_region(two_arm, h, alpha=0.1, mode="asymptotic_only", grid=21)
    se = np.sqrt(s.variances[0, 0] / s.counts[0] + s.variances[1, 0] / s.counts[1])
    assert region.shape[0, 0] == pytest.approx(se**2)
    assert region.radius == pytest.approx(stats.chi2.ppf(0.9, 1))
    half = np.sqrt(region.radius) * se
    assert region.ellipsoid_value(region.center + half) == pytest.approx(region.radius)
    acc = region.points[region.accepted, 0]
    assert acc.min() >= region.center[0] - half - 1e-12
    assert acc.max() <= region.center[0] + half + 1e-12


def test_ellipse_membership_matches_x2(two_arm):
    h = make_hypothesis([[1, -1]])
    region = confidence_region(two_arm, h, mode="asymptotic_only", grid=31)
    s = group_summaries(two_arm)
    for pt, inside in zip(region.points, region.in_ellipsoid):
        assert (S.x2(s, h.with_target(pt)) <= region.radius) == inside


def test_center_is_accepted(two_arm):
    region = confidence_region(two_arm, make_hypothesis([[1, -1]]), grid=5, draws=200, seed=1)
    mid = region.points.shape[0] // 2
    np.testing.assert_allclose(region.points[mid], region.center)
    assert region.pvalues[mid] == 1.0 and region.accepted[mid]


def test_duality_with_engine(two_arm):
    h = make_hypothesis([[1, -1]])
    region = confidence_region(two_arm, h, grid=9, draws=300, seed=11)
    for pt, p, acc in zip(region.points, region.pvalues, region.accepted):
        direct = frt_pvalue(two_arm, h.with_target(pt), "x2", draws=300, seed=11).p_frt
        assert direct == p
        assert acc == (direct > region.alpha)


def test_nesting_across_levels(two_arm):
    h = make_hypothesis([[1, -1]])
    pts = confidence_region(two_arm, h, grid=15, mode="asymptotic_only").points
    wide = confidence_region(two_arm, h, alpha=0.01, points=pts, draws=300, seed=2)
    narrow = confidence_region(two_arm, h, alpha=0.2, points=pts, draws=300, seed=2)
    assert np.all(wide.accepted[narrow.accepted])


def test_grid_mode_limited_to_two_rows(rng):
    data = random_dataset(rng, [4, 4, 4, 4])
    from weaknull.contrast import anova_contrast
    from weaknull.errors import ContrastError

    with pytest.raises(ContrastError):
        confidence_region(data, make_hypothesis(anova_contrast(4)))


def test_bonferroni_single_row_equals_tplus(two_arm):
    res = bonferroni_inequalities(two_arm, [[1, -1]], [0.5], alpha=0.05, draws=400, seed=4)
    direct = frt_pvalue(two_arm, make_hypothesis([[1, -1]], [0.5], orientation="one_sided_ge"), "tplus", draws=400, seed=4)
    assert res.pvalues == [direct.p_frt]
    assert res.rejected == (direct.p_frt <= 0.05)


def test_bonferroni_one_violated_row():
    rng = np.random.default_rng(0)
    y = np.concatenate([rng.normal(0, 1, 15), rng.normal(0, 1, 15), rng.normal(5, 1, 15)])
    data = ExperimentDataset.from_arrays(np.repeat([0, 1, 2], 15), y)
    C = [[1, -1, 0], [1, 0, -1]]
    res = bonferroni_inequalities(data, C, [-10.0, 0.0], alpha=0.05, draws=999, seed=1)
    assert res.row_rejected == [False, True]
    assert res.rejected
    assert res.pvalues[1] <= 0.025


def test_bonferroni_all_satisfied():
    rng = np.random.default_rng(1)
    data = ExperimentDataset.from_arrays(np.repeat([0, 1, 2], 15), rng.normal(size=45))
    res = bonferroni_inequalities(data, [[1, -1, 0], [1, 0, -1]], [-20.0, -20.0], draws=500, seed=1)
    assert not res.rejected
    assert all(p == 1.0 for p in res.pvalues)
