"""Finite-population simulations of type I error under weak nulls."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import PopulationSpec, limit_weights
from .contrast import Hypothesis, anova_contrast, factorial_contrast, make_hypothesis
from .data import ExperimentDataset
from .engine import RandomizationScheme, draw_assignment, frt_pvalues
from .errors import ValidationError, WeakNullError

SCENARIOS = ("anova_J3", "factorial_2x2", "sre_two_strata", "custom")
DEFAULT_ALPHAS = (0.01, 0.05, 0.1)
FINE_EDGES = np.round(np.arange(0.0, 0.1 + 1e-12, 0.02), 10)
HIST_EDGES = np.concatenate([FINE_EDGES, np.round(np.arange(0.2, 1.0 + 1e-12, 0.1), 10)])


@dataclass
class SimulationSpec:
    """One simulation setting.

    ``n`` is the number of units per arm (per arm and stratum for stratified
    scenarios). ``custom`` requires ``u``; it uses the all-arms equality
    contrast unless ``C`` is given and adds ``shift`` to stratum ``h`` for
    ``h = 1 .. n_strata - 1``.
    """

    scenario: str = "anova_J3"
    n: int = 40
    R_outer: int = 2000
    R_inner: int = 1000
    alphas: tuple = DEFAULT_ALPHAS
    seed: int = 0
    statistics: tuple = ()
    u: tuple | None = None
    C: np.ndarray | None = None
    n_strata: int = 1
    shift: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "anova_J3":
            self.u = (1.0, 2.0, 3.0)
        elif self.scenario == "factorial_2x2":
            self.u = (3.0, 1.0, 1.0, 3.0)
        elif self.scenario == "sre_two_strata":
            self.u = (1.0, 2.0, 3.0)
            self.n_strata = 2
        elif self.u is None:
            raise ValidationError("custom scenarios need u")
        self.u = tuple(float(v) for v in self.u)
        if not any(self.u):
            raise ValidationError("u must be non-zero")
        if self.n < 2:
            raise ValidationError("need at least two units per arm")
        if not self.statistics:
            self.statistics = ("x2",) if self.stratified else ("x2", "box")

    @property
    def J(self) -> int:
        return len(self.u)

    @property
    def stratified(self) -> bool:
        return self.n_strata > 1

    def contrast(self) -> np.ndarray:
        if self.C is not None:
            return np.atleast_2d(np.asarray(self.C, dtype=float))
        if self.scenario == "factorial_2x2":
            return factorial_contrast(2, [1, 2])
        return anova_contrast(self.J)

    def hypothesis(self) -> Hypothesis:
        return make_hypothesis(self.contrast())


@dataclass(frozen=True)
class Population:
    """Science table ``Y (N, J)`` with stratum labels and arm sizes per stratum."""

    Y: np.ndarray
    stratum: np.ndarray
    n_per_cell: int

    @property
    def N(self) -> int:
        return self.Y.shape[0]


def generate_population(spec: SimulationSpec, rng: np.random.Generator | None = None) -> Population:
    """Standard normal base column, centered exactly, scaled per arm by ``u``.

    Every column then has mean zero within each stratum, so the weak null
    holds; later strata are shifted by a constant.
    """
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n_stratum = spec.n * spec.J
    base = rng.standard_normal(n_stratum)
    base -= base.mean()
    block = base[:, None] * np.asarray(spec.u)[None, :]
    Y = np.vstack([block + h * spec.shift for h in range(spec.n_strata)])
    stratum = np.repeat(np.arange(spec.n_strata), n_stratum)
    return Population(Y=Y, stratum=stratum, n_per_cell=spec.n)


def population_spec(pop: Population, J: int) -> PopulationSpec:
    """Limiting ``(p, S)`` of a balanced population (first stratum)."""
    Y = pop.Y[pop.stratum == 0]
    return PopulationSpec.from_science_table(Y, np.full(J, Y.shape[0] // J))


@dataclass
class StudyResult:
    spec: SimulationSpec
    pvalues: dict  # statistic -> array of length R_outer (nan on failure)
    failures: dict = field(default_factory=dict)

    def rejection_table(self) -> list[dict]:
        rows = []
        for stat, p in self.pvalues.items():
            ok = p[~np.isnan(p)]
            R = ok.size
            for a in self.spec.alphas:
                rate = float(np.mean(ok <= a)) if R else float("nan")
                se = float(np.sqrt(rate * (1 - rate) / R)) if R else float("nan")
                rows.append(
                    {
                        "scenario": self.spec.scenario,
                        "statistic": stat,
                        "n": self.spec.n,
                        "alpha": a,
                        "rate": rate,
                        "se": se,
                        "replications": R,
                    }
                )
        return rows

    def histogram(self) -> list[dict]:
        """Density of p-values over fine bins below 0.1 and coarse bins above."""
        rows = []
        for stat, p in self.pvalues.items():
            ok = p[~np.isnan(p)]
            counts, _ = np.histogram(ok, bins=HIST_EDGES)
            widths = np.diff(HIST_EDGES)
            for lo, hi, c, w in zip(HIST_EDGES[:-1], HIST_EDGES[1:], counts, widths):
                rows.append(
                    {
                        "scenario": self.spec.scenario,
                        "statistic": stat,
                        "n": self.spec.n,
                        "lower": float(lo),
                        "upper": float(hi),
                        "count": int(c),
                        "density": float(c / (ok.size * w)) if ok.size else float("nan"),
                    }
                )
        return rows

    def density(self, statistic: str, lower: float = 0.0, upper: float = 0.02) -> float:
        p = self.pvalues[statistic]
        ok = p[~np.isnan(p)]
        inside = (ok >= lower) & ((ok < upper) if upper < 1 else (ok <= upper))
        return float(inside.mean() / (upper - lower))


def _observed(pop: Population, spec: SimulationSpec, rng) -> ExperimentDataset:
    J = spec.J
    if spec.stratified:
        template = np.tile(np.repeat(np.arange(J), spec.n), spec.n_strata)
        scheme = RandomizationScheme.stratified(pop.stratum, template, J)
    else:
        scheme = RandomizationScheme.complete(np.full(J, spec.n))
    w = draw_assignment(scheme, rng)
    y = pop.Y[np.arange(pop.N), w]
    return ExperimentDataset.from_arrays(
        w,
        y,
        stratum=pop.stratum if spec.stratified else None,
        arm_order=list(range(J)),
    )


def type1_study(spec: SimulationSpec, population: Population | None = None) -> StudyResult:
    """Repeatedly randomize the fixed population and record FRT p-values.

    Replication ``r`` uses streams spawned from ``spec.seed``, so results do
    not depend on ``spec.workers``. All statistics share the permutations of
    a replication.
    """
    root = np.random.SeedSequence(spec.seed)
    pop_seq, rep_seq = root.spawn(2)
    pop = population if population is not None else generate_population(spec, np.random.default_rng(pop_seq))
    h = spec.hypothesis()
    children = rep_seq.spawn(spec.R_outer)
    stats = list(spec.statistics)

    def one(r):
        rng = np.random.default_rng(children[r])
        data = _observed(pop, spec, rng)
        inner_seed = int(rng.integers(2**63))
        try:
            res = frt_pvalues(data, h, stats, draws=spec.R_inner, seed=inner_seed)
            return [x.p_frt for x in res], None
        except WeakNullError as exc:
            return [np.nan] * len(stats), f"{type(exc).__name__}: {exc}"

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(one, range(spec.R_outer)))
    else:
        results = [one(r) for r in range(spec.R_outer)]
    pvals = {s: np.array([res[0][k] for res in results]) for k, s in enumerate(stats)}
    failures: dict = {}
    for _, err in results:
        if err is not None:
            failures[err] = failures.get(err, 0) + 1
    return StudyResult(spec=spec, pvalues=pvals, failures=failures)


def scenario_limit_weights(spec: SimulationSpec) -> dict:
    """Sampling-law weights of X2 and of m*B at the exact population ``S = u u'``."""
    pop = PopulationSpec.rank_one(spec.u)
    C = spec.contrast()
    return {key: limit_weights(pop, C, key).weights for key in ("x2", "box")}


def write_csv(rows: list[dict], path) -> None:
    if not rows:
        open(path, "w").close()
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
