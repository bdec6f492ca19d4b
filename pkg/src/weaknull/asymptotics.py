"""Reference distributions and limiting laws of the test statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import ExperimentDataset
from .errors import SingularDenominator, UnsupportedStatistic, ValidationError
from .statistics import Statistic


def reference_pvalue(t_obs: float, statistic, m: int, N: int, J: int) -> float:
    """Upper-tail p-value of ``t_obs`` under the statistic's usual reference law.

    Wald-type statistics use chi-square(m), F uses F(m, N - J), the
    single-row t statistics the standard normal. A truncated t equal to
    zero has p-value 1 (the truncation puts half the mass at zero).
    """
    kind = Statistic.parse(statistic)
    if kind is Statistic.BOX:
        raise UnsupportedStatistic("the Box-type statistic has no pivotal reference distribution")
    if kind in (Statistic.X2, Statistic.X2_HW):
        return float(stats.chi2.sf(t_obs, m))
    if kind is Statistic.F:
        if N <= J:
            raise ValidationError("F reference needs N > J")
        return float(stats.f.sf(t_obs, m, N - J))
    if kind is Statistic.T_PLUS and t_obs <= 0:
        return 1.0
    return float(stats.norm.sf(t_obs))


@dataclass(frozen=True)
class PopulationSpec:
    """Limiting arm proportions ``p`` and potential-outcome covariance ``S``."""

    p: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if p.ndim != 1 or np.any(p <= 0) or np.any(p >= 1) or not np.isclose(p.sum(), 1.0):
            raise ValidationError("arm proportions must lie in (0, 1) and sum to 1")
        if S.shape != (p.size, p.size) or not np.allclose(S, S.T):
            raise ValidationError("S must be a symmetric J x J matrix")
        if np.any(np.diag(S) <= 0):
            raise ValidationError("S must have a positive diagonal")
        if np.linalg.eigvalsh(S)[0] < -1e-10 * np.abs(S).max():
            raise ValidationError("S must be positive semidefinite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "S", S)

    @classmethod
    def rank_one(cls, u, p=None) -> "PopulationSpec":
        """``S = u u'``; balanced arms unless ``p`` is given."""
        u = np.asarray(u, dtype=float)
        p = np.full(u.size, 1 / u.size) if p is None else p
        return cls(p=p, S=np.outer(u, u))

    @classmethod
    def from_science_table(cls, Y: np.ndarray, counts) -> "PopulationSpec":
        """Finite-population covariance of an ``(N, J)`` table with arm sizes ``counts``."""
        counts = np.asarray(counts, dtype=float)
        return cls(p=counts / counts.sum(), S=np.cov(Y, rowvar=False, ddof=1))

    @property
    def J(self) -> int:
        return self.p.size

    @property
    def D(self) -> np.ndarray:
        return np.diag(np.diag(self.S) / self.p)

    @property
    def V(self) -> np.ndarray:
        return self.D - self.S

    @property
    def P(self) -> np.ndarray:
        return np.diag(self.p)

    @property
    def S_bar(self) -> float:
        return float(self.p @ np.diag(self.S))


@dataclass(frozen=True)
class LimitLaw:
    """``sum_j weights[j] * xi_j**2`` with iid standard normal ``xi``."""

    weights: np.ndarray
    description: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def sf(self, q: float) -> float:
        return weighted_chi2_tail(self.weights, q)


def _relative_eigs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``A B^{-1}`` via the symmetric ``B^{-1/2} A B^{-1/2}``, descending."""
    ev, U = np.linalg.eigh(B)
    if ev[0] <= 1e-12 * max(1.0, abs(ev[-1])):
        raise SingularDenominator("denominator matrix is singular")
    R = U @ np.diag(ev**-0.5) @ U.T
    out = np.linalg.eigvalsh(R @ A @ R)
    return np.clip(out[::-1], 0.0, None)


def _projection(C):
    return C.T @ np.linalg.solve(C @ C.T, C)


def limit_weights(pop: PopulationSpec, C, statistic) -> LimitLaw:
    """Weights of the limiting distribution of a statistic under the weak null.

    ``statistic`` is one of

    * ``x2`` -- sampling law of X2: eigenvalues of ``C V C' (C D C')^{-1}``;
    * ``box`` -- sampling law of ``m * B``: ``m * eig(M V) / tr(M D)``;
    * ``box_randomization`` -- randomization law of ``m * B``:
      ``m * eig(M P^{-1}) / tr(M P^{-1})``;
    * ``f`` -- sampling law of ``m * F``: eigenvalues of
      ``C V C' (S_bar C P^{-1} C')^{-1}``;
    * ``x2_randomization`` / ``f_randomization`` -- chi-square(m), all ones.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    m = C.shape[0]
    key = str(getattr(statistic, "value", statistic)).lower()
    V, D, Pinv = pop.V, pop.D, np.diag(1 / pop.p)
    if key == "x2":
        w = _relative_eigs(C @ V @ C.T, C @ D @ C.T)
    elif key == "f":
        w = _relative_eigs(C @ V @ C.T, pop.S_bar * C @ Pinv @ C.T)
    elif key in ("box", "box_randomization"):
        M = _projection(C)
        target, denom = (V, D) if key == "box" else (Pinv, Pinv)
        tr = np.trace(M @ denom)
        if tr <= 0:
            raise SingularDenominator("trace in the Box-type statistic is not positive")
        # M target M is symmetric and shares the nonzero spectrum of M target
        ev = np.linalg.eigvalsh(M @ target @ M)[::-1][:m]
        w = np.clip(m * ev / tr, 0.0, None)
    elif key in ("x2_randomization", "f_randomization", "x2hw_randomization"):
        w = np.ones(m)
    else:
        raise UnsupportedStatistic(f"no limit law for {statistic!r}")
    return LimitLaw(weights=np.sort(w)[::-1], description=key)


def weighted_chi2_tail(
    weights, q: float, method: str = "series", draws: int = 10**6, seed: int = 0
) -> float:
    """``P(sum_j w_j xi_j^2 >= q)`` for nonnegative weights.

    The default expands the law as a mixture of central chi-square laws
    (Ruben's series with ``beta = min(w)``); all mixture weights are
    positive, so the series is summed until the neglected mass is below
    1e-12. ``method="monte_carlo"`` draws ``draws`` samples with a fixed seed.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValidationError("weights must be nonnegative")
    w = w[w > 0]
    if w.size == 0:
        raise ValidationError("weights must not all be zero")
    if q <= 0:
        return 1.0
    if method == "monte_carlo":
        rng = np.random.default_rng(seed)
        hits = done = 0
        while done < draws:
            n = min(200_000, draws - done)
            hits += int(np.count_nonzero(rng.chisquare(1, size=(n, w.size)) @ w >= q))
            done += n
        return hits / draws
    if method != "series":
        raise ValueError(f"unknown method {method!r}")
    return _ruben_tail(w, q)


def _ruben_tail(w: np.ndarray, q: float, tol: float = 1e-12, max_terms: int = 5000) -> float:
    n = w.size
    beta = w.min()
    ratio = 1.0 - beta / w  # in [0, 1)
    coef = np.zeros(max_terms + 1)
    g = np.zeros(max_terms + 1)
    coef[0] = np.exp(0.5 * np.log(beta / w).sum())
    powers = np.ones_like(ratio)
    mass = coef[0]
    k = 0
    while 1.0 - mass > tol and k < max_terms:
        k += 1
        powers = powers * ratio
        g[k] = powers.sum()
        coef[k] = np.dot(g[k:0:-1], coef[:k]) / (2 * k)
        mass += coef[k]
    if 1.0 - mass > 1e-6:
        # extremely spread weights: the series converges too slowly
        return weighted_chi2_tail(w, q, method="monte_carlo")
    coef = coef[: k + 1]
    dfs = n + 2 * np.arange(k + 1)
    cdf = float(np.dot(coef, stats.chi2.cdf(q / beta, dfs)))
    return float(np.clip(1.0 - cdf, 0.0, 1.0))


def moment_diagnostics(data: ExperimentDataset) -> dict:
    """Heuristic regularity summaries per arm (no pass/fail verdict).

    ``max_sq_dev_over_n`` is the largest squared deviation from the arm mean
    divided by the total sample size; ``fourth_moment`` the mean fourth power
    of deviations. Both should be small relative to the variance for the
    large-sample approximations to be trustworthy.
    """
    N = data.N
    out = {"max_sq_dev_over_n": [], "fourth_moment": [], "variance": []}
    for j in range(data.J):
        y = data.outcome[data.treatment == j]
        dev = y - y.mean(axis=0)
        sq = (dev**2).sum(axis=1)
        out["max_sq_dev_over_n"].append(float(sq.max() / N))
        out["fourth_moment"].append(float((sq**2).mean()))
        out["variance"].append(float(sq.sum() / (len(y) - 1)))
    return out
