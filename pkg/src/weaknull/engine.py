"""Fisher randomization test: re-randomize, recompute, count exceedances."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations, islice, product
from typing import Callable, Iterator

import numpy as np

from . import kernels
from .contrast import Hypothesis
from .data import ExperimentDataset
from .errors import CapExceeded, SingularCovariance, TooManyDegenerateDraws, ValidationError
from .imputation import ScienceTable, aggregate_clusters, cluster_hypothesis, impute
from .statistics import Statistic, evaluate_batch

DEFAULT_DRAWS = 10_000
ENUMERATION_CAP = 10**6
CHUNK_SIZE = 1000
MAX_DEGENERATE_FRACTION = 0.01
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class RandomizationScheme:
    """How treatments are re-randomized.

    ``template`` lists each unit's arm under one valid assignment and
    ``strata`` each unit's stratum; a draw permutes the template within
    strata. ``kind`` is ``complete``, ``stratified`` or ``cluster`` (a
    complete randomization whose units are whole clusters).
    """

    kind: str
    template: np.ndarray
    strata: np.ndarray
    n_arms: int

    @classmethod
    def complete(cls, arm_sizes) -> "RandomizationScheme":
        sizes = np.asarray(arm_sizes, dtype=np.int64)
        template = np.repeat(np.arange(sizes.size), sizes)
        return cls("complete", template, np.zeros(template.size, dtype=np.int64), int(sizes.size))

    @classmethod
    def stratified(cls, strata, template, n_arms: int) -> "RandomizationScheme":
        return cls(
            "stratified",
            np.asarray(template, dtype=np.int64),
            np.asarray(strata, dtype=np.int64),
            int(n_arms),
        )

    @classmethod
    def for_dataset(cls, data: ExperimentDataset) -> "RandomizationScheme":
        """Scheme matching the dataset's design (cluster data must be aggregated first)."""
        if data.design == "SRE":
            return cls.stratified(data.stratum, data.treatment, data.J)
        if data.design == "cluster":
            raise ValidationError("aggregate cluster data before building a scheme")
        kind = "cluster" if "n_units" in data.meta else "complete"
        return cls(kind, data.treatment.copy(), np.zeros(data.N, dtype=np.int64), data.J)

    @property
    def N(self) -> int:
        return int(self.template.size)

    @property
    def n_strata(self) -> int:
        return int(self.strata.max()) + 1 if self.N else 0

    def cell_sizes(self) -> np.ndarray:
        out = np.zeros((self.n_strata, self.n_arms), dtype=np.int64)
        np.add.at(out, (self.strata, self.template), 1)
        return out

    def count(self) -> int:
        """Number of distinct assignments (product of multinomial coefficients over strata)."""
        total = 1
        for row in self.cell_sizes():
            n = int(row.sum())
            total *= math.factorial(n) // math.prod(math.factorial(int(k)) for k in row)
        return total


def draw_assignments(scheme: RandomizationScheme, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` independent uniform assignments, shape ``(n, N)``."""
    out = np.empty((n, scheme.N), dtype=np.int64)
    for s in range(scheme.n_strata):
        idx = np.flatnonzero(scheme.strata == s)
        out[:, idx] = rng.permuted(np.broadcast_to(scheme.template[idx], (n, idx.size)), axis=1)
    return out


def draw_assignment(scheme: RandomizationScheme, rng: np.random.Generator) -> np.ndarray:
    return draw_assignments(scheme, rng, 1)[0]


def _arrangements(units: tuple, sizes: tuple) -> Iterator[tuple]:
    if len(sizes) == 1:
        yield (units,)
        return
    for chosen in combinations(units, sizes[0]):
        taken = set(chosen)
        rest = tuple(u for u in units if u not in taken)
        for tail in _arrangements(rest, sizes[1:]):
            yield (chosen, *tail)


def enumerate_assignments(scheme: RandomizationScheme, cap: int = ENUMERATION_CAP) -> Iterator[np.ndarray]:
    """Every distinct assignment exactly once, in a fixed order."""
    total = scheme.count()
    if total > cap:
        raise CapExceeded(f"{total} assignments exceed the enumeration cap of {cap}")
    sizes = scheme.cell_sizes()
    per_stratum = []
    for s in range(scheme.n_strata):
        units = tuple(np.flatnonzero(scheme.strata == s).tolist())
        per_stratum.append(_arrangements(units, tuple(int(k) for k in sizes[s])))
    # product() materializes each factor; fine under the cap
    for combo in product(*per_stratum):
        w = np.empty(scheme.N, dtype=np.int64)
        for arrangement in combo:
            for arm, members in enumerate(arrangement):
                w[list(members)] = arm
        yield w


@dataclass
class FrtResult:
    """Outcome of one randomization test."""

    statistic: str
    t_obs: float
    p_frt: float
    p_reference: float | None
    draws_used: int
    seed: int | None
    exceedance_count: int
    degeneracy_count: int
    exhaustive: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class _Evaluator:
    """Statistic values for batches of assignments of one imputed table."""

    def __init__(self, table: ScienceTable, scheme: RandomizationScheme, hypothesis):
        self.table = table
        self.J = scheme.n_arms
        self.H = scheme.n_strata
        self.offset = scheme.strata * self.J
        self.stratified = scheme.kind == "stratified"
        self.weights = np.bincount(scheme.strata, minlength=self.H) / scheme.N
        self.hypothesis = hypothesis

    def moments(self, assign: np.ndarray):
        counts, means, covs = kernels.cell_moments(self.table.Y_star, assign, self.offset, self.H * self.J)
        R = assign.shape[0]
        d = means.shape[-1]
        shape = (R, self.H, self.J) if self.stratified else (R, self.J)
        return counts.reshape(shape), means.reshape(*shape, d), covs.reshape(*shape, d, d)

    def values(self, statistic, moments) -> np.ndarray:
        counts, means, covs = moments
        if callable(statistic) and not isinstance(statistic, Statistic):
            return np.asarray(statistic(counts, means, covs), dtype=float)
        weights = self.weights if self.stratified else None
        return evaluate_batch(statistic, counts, means, covs, self.hypothesis, weights=weights)

    def __call__(self, statistic, assign: np.ndarray) -> np.ndarray:
        return self.values(statistic, self.moments(assign))


def _tally(values: np.ndarray, t_obs: float) -> tuple[int, int, int]:
    """(exceedances, valid draws, degenerate draws); ties count as exceedances."""
    ok = ~np.isnan(values)
    tol = TIE_RTOL * max(1.0, abs(t_obs))
    return int(np.count_nonzero(values[ok] >= t_obs - tol)), int(ok.sum()), int((~ok).sum())


def _resolve_seed(seed) -> int:
    if seed is None:
        return int(np.random.SeedSequence().entropy % 2**63)
    return int(seed)


def prepare(data: ExperimentDataset, hypothesis: Hypothesis):
    """Cluster designs are analysed on cluster totals with a rescaled target."""
    if data.design == "cluster":
        agg = aggregate_clusters(data)
        return agg, cluster_hypothesis(hypothesis, data.N, agg.N)
    return data, hypothesis


def frt_pvalue(
    data: ExperimentDataset,
    hypothesis: Hypothesis,
    statistic: Statistic | str | Callable = Statistic.X2,
    draws: int = DEFAULT_DRAWS,
    seed: int | None = None,
    exhaustive: bool = False,
    workers: int = 1,
    cap: int = ENUMERATION_CAP,
    max_degenerate: float = MAX_DEGENERATE_FRACTION,
    chunk_size: int = CHUNK_SIZE,
) -> FrtResult:
    """Randomization p-value for ``hypothesis`` using ``statistic``.

    Missing potential outcomes are imputed under the compatible sharp null,
    treatments are re-randomized according to the design, and the statistic
    is recomputed on every draw. Monte Carlo p-values use
    ``(1 + #exceed) / (1 + draws)``; ``exhaustive=True`` enumerates every
    assignment and returns the exact proportion.

    ``statistic`` may also be a callable ``f(counts, means, covs) -> values``
    over batched arm summaries.
    """
    return frt_pvalues(
        data, hypothesis, [statistic], draws=draws, seed=seed, exhaustive=exhaustive,
        workers=workers, cap=cap, max_degenerate=max_degenerate, chunk_size=chunk_size,
    )[0]


def _parse_statistic(statistic):
    if callable(statistic) and not isinstance(statistic, (str, Statistic)):
        return statistic
    return Statistic.parse(statistic)


def frt_pvalues(
    data: ExperimentDataset,
    hypothesis: Hypothesis,
    statistics,
    draws: int = DEFAULT_DRAWS,
    seed: int | None = None,
    exhaustive: bool = False,
    workers: int = 1,
    cap: int = ENUMERATION_CAP,
    max_degenerate: float = MAX_DEGENERATE_FRACTION,
    chunk_size: int = CHUNK_SIZE,
) -> list[FrtResult]:
    """Several statistics tested on the same re-randomizations.

    Each result equals what :func:`frt_pvalue` returns for that statistic
    with the same arguments.
    """
    data, hypothesis = prepare(data, hypothesis)
    scheme = RandomizationScheme.for_dataset(data)
    table = impute(data, hypothesis)
    kinds = [_parse_statistic(s) for s in statistics]
    evaluator = _Evaluator(table, scheme, hypothesis)
    k = len(kinds)

    observed = evaluator.moments(data.treatment[None, :])
    t_obs = []
    for kind in kinds:
        t = float(evaluator.values(kind, observed)[0])
        if np.isnan(t):
            raise SingularCovariance("observed statistic is undefined")
        t_obs.append(t)

    def tally(assign):
        mom = evaluator.moments(assign)
        return [_tally(evaluator.values(kind, mom), t) for kind, t in zip(kinds, t_obs)]

    def reduce(parts):
        return [tuple(sum(p[i][c] for p in parts) for c in range(3)) for i in range(k)]

    if exhaustive:
        parts = []
        stream = enumerate_assignments(scheme, cap)
        while True:
            batch = list(islice(stream, chunk_size))
            if not batch:
                break
            parts.append(tally(np.array(batch)))
        sums = reduce(parts) if parts else [(0, 0, 0)] * k
        pvals = [e / u if u else float("nan") for e, u, _ in sums]
        seed_used = None
    else:
        seed_used = _resolve_seed(seed)
        total = int(draws)
        n_chunks = -(-total // chunk_size)
        children = np.random.SeedSequence(seed_used).spawn(n_chunks)

        def run(c):
            n = min(chunk_size, total - c * chunk_size)
            return tally(draw_assignments(scheme, np.random.default_rng(children[c]), n))

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, range(n_chunks)))
        else:
            parts = [run(c) for c in range(n_chunks)]
        sums = reduce(parts)
        pvals = [(1 + e) / (1 + u) for e, u, _ in sums]

    out = []
    for kind, t, (exceed, used, degenerate), p in zip(kinds, t_obs, sums, pvals):
        total = used + degenerate
        if total and degenerate / total > max_degenerate:
            raise TooManyDegenerateDraws(
                f"{degenerate} of {total} re-randomizations had a singular covariance; "
                "consider jittering tied outcomes"
            )
        p_ref = None
        if isinstance(kind, Statistic) and kind is not Statistic.BOX:
            from .asymptotics import reference_pvalue

            p_ref = reference_pvalue(t, kind, hypothesis.m, data.N, data.J)
        out.append(
            FrtResult(
                statistic=kind.value if isinstance(kind, Statistic) else getattr(kind, "__name__", "custom"),
                t_obs=t,
                p_frt=float(p),
                p_reference=p_ref,
                draws_used=used,
                seed=seed_used,
                exceedance_count=exceed,
                degeneracy_count=degenerate,
                exhaustive=exhaustive,
            )
        )
    return out
