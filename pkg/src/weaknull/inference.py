"""Point estimates, confidence regions by test inversion, and one-sided multiple tests."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .contrast import Hypothesis, make_hypothesis
from .data import ExperimentDataset, summarize
from .engine import DEFAULT_DRAWS, FrtResult, frt_pvalue, prepare
from .errors import ContrastError, WeakNullError
from .statistics import Statistic


def _estimate_and_cov(data: ExperimentDataset, h: Hypothesis):
    """``C mean`` and the estimated covariance of it, on the analysis scale."""
    C = h.C
    if data.design == "SRE":
        N = data.N
        est = np.zeros(C.shape[0])
        cov = np.zeros((C.shape[0], C.shape[0]))
        for s in range(data.H):
            rows = data.stratum == s
            sm = summarize(data.outcome[rows], data.treatment[rows], data.J)
            w = rows.sum() / N
            est += w * (C @ sm.mean_vector)
            cov += w * C @ sm.d_hat @ C.T
        return est, cov / N
    sm = summarize(data.outcome, data.treatment, data.J)
    return C @ sm.mean_vector, C @ sm.d_hat @ C.T / sm.N


def hl_estimate(data: ExperimentDataset, h: Hypothesis) -> np.ndarray:
    """Target value maximizing the randomization p-value: the plug-in ``C mean``.

    For cluster designs this is ``L / N`` times the contrast of cluster totals.
    """
    adata, ah = prepare(data, h)
    est, _ = _estimate_and_cov(adata, ah)
    return est * _cluster_factor(data, adata)


def _cluster_factor(data, adata) -> float:
    return adata.N / data.N if data.design == "cluster" else 1.0


@dataclass
class ConfidenceRegion:
    """Grid of candidate targets with their p-values and membership flags."""

    alpha: float
    center: np.ndarray
    shape: np.ndarray  # covariance of the estimate; ellipsoid is (x-c)' shape^{-1} (x-c) <= radius
    radius: float
    mode: str
    points: np.ndarray
    pvalues: np.ndarray
    accepted: np.ndarray
    in_ellipsoid: np.ndarray
    errors: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for k, pt in enumerate(self.points):
            out.append(
                {
                    "x": [float(v) for v in pt],
                    "p": float(self.pvalues[k]),
                    "accepted": bool(self.accepted[k]),
                    "in_ellipsoid": bool(self.in_ellipsoid[k]),
                }
            )
        return out

    def ellipsoid_value(self, x) -> float:
        diff = np.atleast_1d(x) - self.center
        return float(diff @ np.linalg.solve(self.shape, diff))


def _grid(center, cov, radius, n, inflation):
    half = inflation * np.sqrt(radius * np.diag(cov))
    axes = [np.linspace(c - h, c + h, n) for c, h in zip(center, half)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def confidence_region(
    data: ExperimentDataset,
    h: Hypothesis,
    alpha: float = 0.05,
    grid: int = 41,
    inflation: float = 1.5,
    mode: str = "frt_inverted",
    draws: int = DEFAULT_DRAWS,
    seed: int = 0,
    workers: int = 1,
    points=None,
) -> ConfidenceRegion:
    """Confidence set for ``C mean`` by inverting X2 randomization tests.

    The asymptotic ellipsoid ``{x : X2(x) <= chi2_{m, 1-alpha}}`` is always
    computed and sets the grid: ``grid`` points per axis spanning
    ``inflation`` times the ellipsoid's half-widths. With
    ``mode="frt_inverted"`` every grid point is tested with the same seed and
    kept when its p-value exceeds ``alpha``; ``mode="asymptotic_only"`` keeps
    the grid points inside the ellipsoid. Custom ``points`` override the grid.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if mode not in ("frt_inverted", "asymptotic_only"):
        raise ValueError(f"unknown mode {mode!r}")
    m = h.m
    adata, ah = prepare(data, h)
    factor = _cluster_factor(data, adata)
    est, cov = _estimate_and_cov(adata, ah)
    center = est * factor
    shape = cov * factor**2
    radius = float(stats.chi2.ppf(1 - alpha, m))
    if points is None:
        if m > 2 and mode == "frt_inverted":
            raise ContrastError("grid inversion is limited to one or two contrast rows")
        pts = _grid(center, shape, radius, grid, inflation)
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, m)

    diff = pts - center
    ell = np.einsum("ka,ka->k", diff, np.linalg.solve(shape, diff.T).T)
    inside = ell <= radius
    errors: dict = {}
    if mode == "asymptotic_only":
        pv = stats.chi2.sf(ell, m)
        accepted = inside.copy()
    else:
        def one(k):
            try:
                res = frt_pvalue(data, h.with_target(pts[k]), Statistic.X2, draws=draws, seed=seed)
                return res.p_frt, None
            except WeakNullError as exc:
                return np.nan, str(exc)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, range(len(pts))))
        else:
            results = [one(k) for k in range(len(pts))]
        pv = np.array([r[0] for r in results])
        errors = {k: r[1] for k, r in enumerate(results) if r[1] is not None}
        accepted = pv > alpha
    return ConfidenceRegion(
        alpha=alpha,
        center=center,
        shape=shape,
        radius=radius,
        mode=mode,
        points=pts,
        pvalues=np.asarray(pv, dtype=float),
        accepted=np.asarray(accepted, dtype=bool),
        in_ellipsoid=inside,
        errors=errors,
    )


@dataclass
class BonferroniResult:
    alpha: float
    pvalues: list[float]
    row_rejected: list[bool]
    rejected: bool
    results: list[FrtResult]


def bonferroni_inequalities(
    data: ExperimentDataset,
    C,
    x=None,
    alpha: float = 0.05,
    draws: int = DEFAULT_DRAWS,
    seed: int | None = 0,
) -> BonferroniResult:
    """Test ``C mean >= x`` row by row with the truncated t at level ``alpha / m``.

    The global hypothesis is rejected when any row is.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    m = C.shape[0]
    x = np.zeros(m) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    results = []
    for r in range(m):
        hr = make_hypothesis(C[r], [x[r]], orientation="one_sided_ge")
        results.append(frt_pvalue(data, hr, Statistic.T_PLUS, draws=draws, seed=seed))
    pvals = [res.p_frt for res in results]
    rows = [p <= alpha / m for p in pvals]
    return BonferroniResult(alpha=alpha, pvalues=pvals, row_rejected=rows, rejected=any(rows), results=results)
