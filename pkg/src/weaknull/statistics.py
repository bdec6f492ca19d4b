"""Test statistics evaluated from per-arm summaries.

Every statistic has a batched implementation working on arrays with
arbitrary leading dimensions (one entry per re-randomization), which the
randomization engine uses, and a scalar wrapper taking
:class:`~weaknull.data.GroupSummaries`. Batched functions return ``nan``
where the statistic is undefined (a singular covariance); scalar wrappers
raise :class:`~weaknull.errors.SingularCovariance` instead.

All statistics reject for large values: ``t`` is oriented so that large
values contradict ``C mean >= x``, the trend statistic so that large values
indicate an increasing dose response.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .contrast import Hypothesis, trend_contrast, make_hypothesis
from .data import GroupSummaries, degenerate_cells
from .errors import ContrastError, SingularCovariance, UnsupportedStatistic

COND_LIMIT = 1e12


class Statistic(str, Enum):
    X2 = "x2"
    BOX = "box"
    F = "f"
    X2_HW = "x2hw"
    T = "t"
    T_PLUS = "tplus"
    TREND = "trend"

    @property
    def single_row(self) -> bool:
        return self in (Statistic.T, Statistic.T_PLUS, Statistic.TREND)

    @classmethod
    def parse(cls, value) -> "Statistic":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "").replace("-", "")
        aliases = {"stratifiedx2": "x2", "b": "box", "hw": "x2hw", "t+": "tplus"}
        return cls(aliases.get(key, key))


# -- batched building blocks --------------------------------------------------


def _mean_vector(means):
    return means.reshape(*means.shape[:-2], -1)


def _sandwich(C, J, d, blocks):
    """``C blockdiag(blocks) C'`` for blocks of shape ``(..., J, d, d)``."""
    Cb = C.reshape(C.shape[0], J, d)
    return np.einsum("mjk,...jkl,njl->...mn", Cb, blocks, Cb)


def _valid_cov(A):
    """Mask of positive definite, well-conditioned ``(..., m, m)`` matrices."""
    if A.shape[-1] == 1:
        return A[..., 0, 0] > 0
    with np.errstate(all="ignore"):
        ev = np.linalg.eigvalsh(A)
    return (ev[..., 0] > 0) & (ev[..., -1] < COND_LIMIT * ev[..., 0])


def _quadratic(est, A, scale):
    """``scale * est' A^{-1} est`` with ``nan`` where ``A`` is singular."""
    ok = _valid_cov(A)
    safe = np.where(ok[..., None, None], A, np.eye(A.shape[-1]))
    if A.shape[-1] == 1:
        val = est[..., 0] ** 2 / safe[..., 0, 0]
    else:
        sol = np.linalg.solve(safe, est[..., None])[..., 0]
        val = (est * sol).sum(axis=-1)
    return np.where(ok, scale * val, np.nan)


def _studentized(diff, A, N):
    """``sqrt(N) diff / sqrt(A)`` for a single contrast row."""
    ok = _valid_cov(A)
    var = np.where(ok, A[..., 0, 0], 1.0)
    return np.where(ok, np.sqrt(N) * diff[..., 0] / np.sqrt(var), np.nan)


def _cre_parts(counts, means, covs, C, x, kind):
    """Total N, ``C mean - x`` and the covariance estimate for ``sqrt(N) C mean``."""
    counts = np.asarray(counts, dtype=float)
    J, d = means.shape[-2], means.shape[-1]
    N = counts.sum(axis=-1)
    est = _mean_vector(means) @ C.T - x
    if kind is Statistic.X2_HW:
        w = N[..., None] * (counts - 1) / counts**2
    elif kind is Statistic.F:
        if d != 1:
            raise UnsupportedStatistic("the F statistic is defined for scalar outcomes only")
        pooled = ((counts - 1) * covs[..., 0, 0]).sum(axis=-1) / (N - J)
        w = N[..., None] * pooled[..., None] / counts
        return N, est, _sandwich(C, J, d, w[..., None, None] * np.ones_like(covs))
    else:
        w = N[..., None] / counts
    return N, est, _sandwich(C, J, d, w[..., None, None] * covs)


def _stratified_parts(counts, means, covs, weights, C, x):
    """Stratum-weighted mean and covariance; inputs carry an ``(H, J)`` cell axis pair."""
    counts = np.asarray(counts, dtype=float)
    J, d = means.shape[-2], means.shape[-1]
    Nh = counts.sum(axis=-1)  # (..., H)
    N = Nh.sum(axis=-1)
    w = np.asarray(weights, dtype=float)
    pooled_mean = np.einsum("h,...hjk->...jk", w, means)
    est = _mean_vector(pooled_mean) @ C.T - x
    D = np.einsum("h,...hjkl->...jkl", w, (Nh[..., None] / counts)[..., None, None] * covs)
    return N, est, _sandwich(C, J, d, D)


def evaluate_batch(kind, counts, means, covs, h: Hypothesis, weights=None) -> np.ndarray:
    """Statistic values for a batch of summaries.

    ``counts`` ``(..., J)``, ``means`` ``(..., J, d)``, ``covs``
    ``(..., J, d, d)``. With ``weights`` (stratum proportions) the inputs
    carry an extra stratum axis before the arm axis and the stratified
    statistic is computed.
    """
    kind = Statistic.parse(kind)
    C, x = h.C, h.x
    m = C.shape[0]
    if kind.single_row and m != 1:
        raise ContrastError(f"statistic {kind.value!r} needs a single contrast row, got {m}")
    bad = degenerate_cells(means, covs)
    bad = bad.reshape(*bad.shape[: means.ndim - 2 - (weights is not None)], -1).any(axis=-1)

    if weights is not None:
        if kind in (Statistic.BOX, Statistic.F, Statistic.X2_HW):
            raise UnsupportedStatistic(f"{kind.value!r} is not available for stratified designs")
        N, est, A = _stratified_parts(counts, means, covs, weights, C, x)
    elif kind is Statistic.BOX:
        out = _box(counts, means, covs, C, x)
        return np.where(bad, np.nan, out)
    else:
        N, est, A = _cre_parts(counts, means, covs, C, x, kind)

    if kind in (Statistic.X2, Statistic.X2_HW):
        out = _quadratic(est, A, N)
    elif kind is Statistic.F:
        out = _quadratic(est, A, N / m)
    elif kind is Statistic.T:
        out = _studentized(-est, A, N)
    elif kind is Statistic.T_PLUS:
        out = np.maximum(_studentized(-est, A, N), 0.0)
    elif kind is Statistic.TREND:
        out = _studentized(est, A, N)
    else:  # pragma: no cover
        raise UnsupportedStatistic(kind)
    return np.where(bad, np.nan, out)


def _box(counts, means, covs, C, x):
    if np.any(x != 0):
        raise ContrastError("the Box-type statistic is defined for a zero target only")
    counts = np.asarray(counts, dtype=float)
    J, d = means.shape[-2], means.shape[-1]
    N = counts.sum(axis=-1)
    M = C.T @ np.linalg.solve(C @ C.T, C)
    y = _mean_vector(means)
    num = N * np.einsum("...a,ab,...b->...", y, M, y)
    Mb = M.reshape(J, d, J, d)
    Mdiag = np.einsum("jkjl->jkl", Mb)  # diagonal blocks (J, d, d)
    D = (N[..., None] / counts)[..., None, None] * covs
    tr = np.einsum("jkl,...jlk->...", Mdiag, D)
    with np.errstate(all="ignore"):
        return np.where(tr > 0, num / tr, np.nan)


# -- scalar wrappers ---------------------------------------------------------


def _scalar(kind, s: GroupSummaries, h: Hypothesis) -> float:
    val = float(evaluate_batch(kind, s.counts, s.means, s.covs, h))
    if np.isnan(val):
        raise SingularCovariance(f"{Statistic.parse(kind).value} is undefined: singular covariance")
    return val


def x2(s: GroupSummaries, h: Hypothesis) -> float:
    """Studentized Wald statistic ``N (C m - x)' (C D C')^{-1} (C m - x)``."""
    return _scalar(Statistic.X2, s, h)


def box(s: GroupSummaries, h: Hypothesis) -> float:
    """Box-type statistic ``N m' M m / tr(M D)`` with ``M`` the projection onto rows of C."""
    return _scalar(Statistic.BOX, s, h)


def f_stat(s: GroupSummaries, h: Hypothesis) -> float:
    """OLS F statistic with the pooled residual variance."""
    return _scalar(Statistic.F, s, h)


def x2_hw(s: GroupSummaries, h: Hypothesis) -> float:
    """Wald statistic using the Huber-White covariance estimate."""
    return _scalar(Statistic.X2_HW, s, h)


def t_stat(s: GroupSummaries, h: Hypothesis) -> float:
    """``sqrt(N) (x - C m) / se``; large values contradict ``C mean >= x``."""
    return _scalar(Statistic.T, s, h)


def t_plus(s: GroupSummaries, h: Hypothesis) -> float:
    return max(t_stat(s, h), 0.0)


def trend_t(s: GroupSummaries, doses, x: float = 0.0) -> float:
    """Studentized trend statistic for the given doses; large values favour an increasing trend."""
    C = trend_contrast(doses, s.counts)
    return _scalar(Statistic.TREND, s, make_hypothesis(C, [x]))


def stratified_x2(strata: list[GroupSummaries], h: Hypothesis) -> float:
    """Stratified Wald statistic built from per-stratum summaries."""
    counts = np.stack([s.counts for s in strata])
    means = np.stack([s.means for s in strata])
    covs = np.stack([s.covs for s in strata])
    Nh = counts.sum(axis=1)
    val = float(evaluate_batch(Statistic.X2, counts, means, covs, h, weights=Nh / Nh.sum()))
    if np.isnan(val):
        raise SingularCovariance("stratified X2 is undefined: singular covariance")
    return val


def evaluate(kind, s: GroupSummaries, h: Hypothesis) -> float:
    return _scalar(kind, s, h)


# -- one-way ANOVA closed forms ------------------------------------------------


def anova_x2_weighted(s: GroupSummaries) -> float:
    """Precision-weighted between-arm sum of squares for equality of all means."""
    w = s.counts / s.variances[:, 0]
    y = s.means[:, 0]
    centre = (w * y).sum() / w.sum()
    return float((w * (y - centre) ** 2).sum())


def anova_f_classic(s: GroupSummaries) -> float:
    """Fisher's one-way ANOVA F ratio."""
    N, J = s.N, s.J
    y = s.means[:, 0]
    between = (s.counts * (y - s.grand_mean[0]) ** 2).sum() / (J - 1)
    within = ((s.counts - 1) * s.variances[:, 0]).sum() / (N - J)
    return float(between / within)
