"""Filling in the Science Table under the sharp null compatible with a hypothesis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contrast import ContrastBlock, Hypothesis
from .data import ExperimentDataset
from .errors import ContrastError, IllConditioned, NumericalError, StratumTargetMismatch

COND_LIMIT = 1e12
SHARP_NULL_RTOL = 1e-8


def solve_z(block: ContrastBlock) -> np.ndarray:
    """Solve ``[C; C_tilde; 1'] z = [x; x_tilde; 0]`` for the shift vector ``z``."""
    J = block.J
    A = np.vstack([block.C, block.C_tilde, np.ones((1, J))])
    b = np.concatenate([block.x, block.x_tilde, [0.0]])
    cond = np.linalg.cond(A)
    if not cond < COND_LIMIT:
        raise IllConditioned(f"contrast stack has condition number {cond:.3g}")
    return np.linalg.solve(A, b)


@dataclass(frozen=True)
class ScienceTable:
    """Imputed potential outcomes ``Y_star[i, j, k]`` (unit, arm, coordinate).

    ``z`` has shape ``(H, d, J)``: the shift vector per stratum and outcome
    coordinate (``H = 1`` outside stratified designs).
    """

    Y_star: np.ndarray
    z: np.ndarray
    hypothesis: Hypothesis

    @property
    def N(self) -> int:
        return int(self.Y_star.shape[0])

    @property
    def J(self) -> int:
        return int(self.Y_star.shape[1])

    @property
    def d(self) -> int:
        return int(self.Y_star.shape[2])

    def observe(self, assignment: np.ndarray) -> np.ndarray:
        """Observed outcomes ``(N, d)`` had the units received ``assignment``."""
        return self.Y_star[np.arange(self.N), assignment]


def _stratum_blocks(h: Hypothesis, weights: np.ndarray) -> list[list[ContrastBlock]]:
    """Per-stratum blocks carrying ``x_[h]`` and ``x_tilde_[h]``."""
    H = weights.shape[0]
    if h.stratum_targets is None:
        return [list(h.blocks) for _ in range(H)]
    if len(h.stratum_targets) != H:
        raise ContrastError(f"{len(h.stratum_targets)} stratum targets for {H} strata")
    avg = sum(w * t for w, t in zip(weights, h.stratum_targets))
    scale = max(1.0, np.abs(h.x).max(initial=0.0))
    if np.abs(avg - h.x).max() > 1e-10 * scale:
        raise StratumTargetMismatch(
            "size-weighted average of stratum targets does not equal the overall target"
        )
    out = []
    for s in range(H):
        parts = h.split(h.stratum_targets[s])
        if h.stratum_tilde_targets is not None:
            cuts = np.cumsum([b.C_tilde.shape[0] for b in h.blocks])[:-1]
            tparts = np.split(np.asarray(h.stratum_tilde_targets[s], dtype=float), cuts)
        else:
            tparts = [b.x_tilde for b in h.blocks]
        out.append(
            [ContrastBlock(b.C, p, b.C_tilde, t) for b, p, t in zip(h.blocks, parts, tparts)]
        )
    return out


def impute(data: ExperimentDataset, h: Hypothesis) -> ScienceTable:
    """Impute every missing potential outcome by ``Y_i(j) = Y_i^obs + z_j - z_{W_i}``.

    Stratified datasets are imputed stratum by stratum, each with its own
    shift vector; vector outcomes coordinate by coordinate.
    """
    if h.J != data.J:
        raise ContrastError(f"hypothesis covers {h.J} arms, data has {data.J}")
    if h.d != data.d:
        raise ContrastError(f"hypothesis covers {h.d} outcome coordinates, data has {data.d}")
    N, J, d = data.N, data.J, data.d
    if data.design == "SRE":
        strata = data.stratum
        weights = np.bincount(strata, minlength=data.H) / N
        per_stratum = _stratum_blocks(h, weights)
    else:
        strata = np.zeros(N, dtype=np.int64)
        per_stratum = [list(h.blocks)]
    H = len(per_stratum)
    z = np.empty((H, d, J))
    for s, blocks in enumerate(per_stratum):
        for k, b in enumerate(blocks):
            z[s, k] = solve_z(b)

    zs = z[strata]  # (N, d, J)
    own = np.take_along_axis(zs, data.treatment[:, None, None].repeat(d, axis=1), axis=2)[..., 0]
    Y_star = data.outcome[:, None, :] + (zs - own[:, :, None]).transpose(0, 2, 1)
    table = ScienceTable(Y_star=Y_star, z=z, hypothesis=h)
    _check_sharp_null(table, data, per_stratum, strata)
    return table


def _check_sharp_null(table, data, per_stratum, strata):
    Y = table.Y_star
    scale = max(1.0, np.abs(Y).max())
    for s, blocks in enumerate(per_stratum):
        rows = strata == s
        for k, b in enumerate(blocks):
            got = Y[rows, :, k] @ b.C.T
            if b.m and np.abs(got - b.x).max(initial=0.0) > SHARP_NULL_RTOL * scale:
                raise NumericalError("imputed table violates the sharp null beyond tolerance")


def aggregate_clusters(data: ExperimentDataset) -> ExperimentDataset:
    """Collapse a cluster-randomized dataset to one record per cluster.

    Each cluster's outcome is the sum of its members' outcomes; the result
    is a completely randomized dataset over clusters. The original unit
    count is kept in ``meta["n_units"]`` for rescaling targets.
    """
    if data.cluster is None:
        raise ContrastError("dataset has no cluster column")
    L = data.L
    sums = np.zeros((L, data.d))
    np.add.at(sums, data.cluster, data.outcome)
    treat = np.zeros(L, dtype=np.int64)
    treat[data.cluster] = data.treatment
    out = ExperimentDataset.from_arrays(
        [data.arm_labels[t] for t in treat],
        sums,
        unit_ids=data.cluster_labels,
        design="CRE",
        arm_order=data.arm_labels,
    )
    out.meta["n_units"] = data.N
    return out


def cluster_hypothesis(h: Hypothesis, n_units: int, n_clusters: int) -> Hypothesis:
    """Rescale the target for cluster totals: ``x -> N x / L``."""
    return h.with_target(h.x * n_units / n_clusters)
