"""Experiment data model and per-arm sufficient statistics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    ArmTooSmall,
    DegenerateVariance,
    DimensionMismatch,
    MixedClusterTreatment,
    StratumCellTooSmall,
    ValidationError,
)

DESIGNS = ("CRE", "SRE", "cluster")

# A cell is degenerate when its standard deviation is below this fraction of
# the cell's magnitude; shared by the scalar and batched code paths.
DEGENERACY_RTOL = 1e-12
# Correlation matrices with a larger condition number count as singular.
COND_LIMIT = 1e12


def _encode(values) -> tuple[np.ndarray, tuple]:
    """Map arbitrary labels to contiguous codes 0..K-1 in sorted label order."""
    values = list(values)
    try:
        labels = tuple(sorted(set(values)))
    except TypeError:
        labels = tuple(dict.fromkeys(values))
    index = {lab: k for k, lab in enumerate(labels)}
    return np.array([index[v] for v in values], dtype=np.int64), labels


@dataclass(frozen=True)
class ExperimentDataset:
    """Per-unit records of a randomized experiment.

    Treatments, strata and clusters are stored as contiguous integer codes
    starting at 0; the original labels are kept in ``arm_labels`` and friends
    for reporting. Outcomes are always two-dimensional, shape ``(N, d)``.
    Build instances with :meth:`from_arrays`, which also validates.
    """

    treatment: np.ndarray
    outcome: np.ndarray
    arm_labels: tuple
    design: str = "CRE"
    stratum: np.ndarray | None = None
    stratum_labels: tuple | None = None
    cluster: np.ndarray | None = None
    cluster_labels: tuple | None = None
    unit_ids: tuple | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_arrays(
        cls,
        treatment: Sequence,
        outcome,
        stratum: Sequence | None = None,
        cluster: Sequence | None = None,
        unit_ids: Sequence | None = None,
        design: str | None = None,
        arm_order: Sequence | None = None,
    ) -> "ExperimentDataset":
        """Normalize labels, infer the design and validate.

        ``arm_order`` fixes which original label becomes arm 0, 1, ...;
        by default labels are sorted.
        """
        if arm_order is not None:
            arm_order = tuple(arm_order)
            index = {lab: k for k, lab in enumerate(arm_order)}
            missing = set(treatment) - set(index)
            if missing:
                raise ValidationError(f"treatment labels {sorted(missing, key=str)} not in arm_order")
            codes = np.array([index[t] for t in treatment], dtype=np.int64)
            labels = arm_order
        else:
            codes, labels = _encode(treatment)

        y = np.asarray(outcome, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2:
            raise DimensionMismatch("outcome must be a vector or an (N, d) array")
        if y.shape[0] != codes.shape[0]:
            raise DimensionMismatch(
                f"{codes.shape[0]} treatment labels but {y.shape[0]} outcomes"
            )
        if not np.all(np.isfinite(y)):
            raise ValidationError("outcomes must be finite")

        s_codes = s_labels = c_codes = c_labels = None
        if stratum is not None:
            if len(stratum) != len(codes):
                raise DimensionMismatch("stratum column length differs from treatment")
            s_codes, s_labels = _encode(stratum)
        if cluster is not None:
            if len(cluster) != len(codes):
                raise DimensionMismatch("cluster column length differs from treatment")
            c_codes, c_labels = _encode(cluster)
        if design is None:
            design = "cluster" if cluster is not None else "SRE" if stratum is not None else "CRE"

        raw = cls(
            treatment=codes,
            outcome=y,
            arm_labels=labels,
            design=design,
            stratum=s_codes,
            stratum_labels=s_labels,
            cluster=c_codes,
            cluster_labels=c_labels,
            unit_ids=tuple(unit_ids) if unit_ids is not None else None,
        )
        return validate_dataset(raw)

    @property
    def N(self) -> int:
        return int(self.treatment.shape[0])

    @property
    def J(self) -> int:
        return len(self.arm_labels)

    @property
    def d(self) -> int:
        return int(self.outcome.shape[1])

    @property
    def H(self) -> int:
        return 1 if self.stratum is None else len(self.stratum_labels)

    @property
    def L(self) -> int | None:
        return None if self.cluster is None else len(self.cluster_labels)

    @property
    def arm_sizes(self) -> np.ndarray:
        return np.bincount(self.treatment, minlength=self.J)

    def with_outcome(self, outcome) -> "ExperimentDataset":
        """Same design, new outcome values (no re-validation of the design)."""
        y = np.asarray(outcome, dtype=float).reshape(self.N, -1)
        return replace(self, outcome=y)

    def select_arms(self, arms: Sequence) -> "ExperimentDataset":
        """Keep only units whose original arm label is in ``arms``, in that order."""
        keep_codes = [self.arm_labels.index(a) for a in arms]
        mask = np.isin(self.treatment, keep_codes)
        return self._rebuild(mask, [self.arm_labels[c] for c in self.treatment[mask]], tuple(arms))

    def merge_arms(self, groups: Sequence[Sequence]) -> "ExperimentDataset":
        """Collapse arms: each element of ``groups`` becomes one new arm."""
        new_label = {}
        for k, grp in enumerate(groups):
            for a in grp:
                new_label[a] = k
        mask = np.array([self.arm_labels[c] in new_label for c in self.treatment])
        treat = [new_label[self.arm_labels[c]] for c in self.treatment[mask]]
        return self._rebuild(mask, treat, tuple(range(len(groups))))

    def _rebuild(self, mask, treatment, arm_order):
        def pick(labels, codes):
            return None if codes is None else [labels[c] for c in codes[mask]]

        ids = None if self.unit_ids is None else [u for u, k in zip(self.unit_ids, mask) if k]
        return ExperimentDataset.from_arrays(
            treatment,
            self.outcome[mask],
            stratum=pick(self.stratum_labels, self.stratum),
            cluster=pick(self.cluster_labels, self.cluster),
            unit_ids=ids,
            design=self.design,
            arm_order=arm_order,
        )


def validate_dataset(raw: ExperimentDataset) -> ExperimentDataset:
    """Check the regularity conditions the tests rely on.

    Every arm needs at least ``max(2, d + 1)`` units so that each arm's
    sample covariance can be nonsingular; in a stratified design the same
    bound applies to every (stratum, arm) cell; in a cluster design all
    units of a cluster share one arm and every arm needs enough clusters.
    """
    if raw.design not in DESIGNS:
        raise ValidationError(f"unknown design {raw.design!r}; expected one of {DESIGNS}")
    if raw.outcome.ndim != 2 or raw.outcome.shape[0] != raw.treatment.shape[0]:
        raise DimensionMismatch("outcome array does not match the number of units")
    N, J, d = raw.N, raw.J, raw.d
    need = max(2, d + 1)
    if J < 2:
        raise ValidationError("at least two treatment arms are required")
    if raw.treatment.min() < 0 or raw.treatment.max() >= J:
        raise ValidationError("treatment codes out of range")

    sizes = np.bincount(raw.treatment, minlength=J)
    small = np.flatnonzero(sizes < need)
    if small.size:
        j = small[0]
        raise ArmTooSmall(
            f"arm {raw.arm_labels[j]!r} has {sizes[j]} units; at least {need} required"
        )

    if raw.design == "SRE":
        if raw.stratum is None:
            raise ValidationError("SRE design requires a stratum column")
        cells = np.zeros((raw.H, J), dtype=np.int64)
        np.add.at(cells, (raw.stratum, raw.treatment), 1)
        bad = np.argwhere(cells < need)
        if bad.size:
            h, j = bad[0]
            raise StratumCellTooSmall(
                f"stratum {raw.stratum_labels[h]!r}, arm {raw.arm_labels[j]!r} has "
                f"{cells[h, j]} units; at least {need} required"
            )

    if raw.design == "cluster":
        if raw.cluster is None:
            raise ValidationError("cluster design requires a cluster column")
        L = raw.L
        first = np.full(L, -1, dtype=np.int64)
        for c, t in zip(raw.cluster, raw.treatment):
            if first[c] == -1:
                first[c] = t
            elif first[c] != t:
                raise MixedClusterTreatment(
                    f"cluster {raw.cluster_labels[c]!r} contains units under different treatments"
                )
        per_arm = np.bincount(first, minlength=J)
        small = np.flatnonzero(per_arm < need)
        if small.size:
            j = small[0]
            raise ArmTooSmall(
                f"arm {raw.arm_labels[j]!r} has {per_arm[j]} clusters; at least {need} required"
            )
    return raw


@dataclass(frozen=True)
class GroupSummaries:
    """Per-arm counts, means and sample covariances (divisor ``N_j - 1``)."""

    counts: np.ndarray  # (J,)
    means: np.ndarray  # (J, d)
    covs: np.ndarray  # (J, d, d)

    @property
    def N(self) -> int:
        return int(self.counts.sum())

    @property
    def J(self) -> int:
        return int(self.counts.shape[0])

    @property
    def d(self) -> int:
        return int(self.means.shape[1])

    @property
    def mean_vector(self) -> np.ndarray:
        """Arm means stacked arm-major: entry ``j * d + k`` is coordinate k of arm j."""
        return self.means.reshape(-1)

    @property
    def variances(self) -> np.ndarray:
        return np.diagonal(self.covs, axis1=1, axis2=2).copy()

    @property
    def d_hat(self) -> np.ndarray:
        """``N * blockdiag(S_j / N_j)``, the conservative covariance estimate."""
        J, d = self.J, self.d
        out = np.zeros((J * d, J * d))
        for j in range(J):
            out[j * d:(j + 1) * d, j * d:(j + 1) * d] = self.N * self.covs[j] / self.counts[j]
        return out

    @property
    def grand_mean(self) -> np.ndarray:
        return (self.counts[:, None] * self.means).sum(axis=0) / self.N


def degenerate_cells(means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """Boolean mask over ``(..., J)`` of cells whose covariance is unusable."""
    var = np.diagonal(covs, axis1=-2, axis2=-1)
    scale = means**2 + var
    bad = ~(var > (DEGENERACY_RTOL**2) * scale)
    bad = bad.any(axis=-1)
    d = covs.shape[-1]
    if d > 1:
        sd = np.sqrt(np.where(bad[..., None], 1.0, var))
        corr = covs / (sd[..., :, None] * sd[..., None, :])
        with np.errstate(all="ignore"):
            cond = np.linalg.cond(corr)
        bad |= ~(cond < COND_LIMIT)
    return bad


def group_summaries(data: ExperimentDataset, check: bool = True) -> GroupSummaries:
    """Two-pass per-arm means and covariances.

    Raises :class:`DegenerateVariance` when an arm's covariance is (near)
    singular, unless ``check`` is false.
    """
    return summarize(data.outcome, data.treatment, data.J, check=check, labels=data.arm_labels)


def summarize(y, treatment, J, check=True, labels=None) -> GroupSummaries:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    d = y.shape[1]
    counts = np.bincount(treatment, minlength=J)
    means = np.zeros((J, d))
    covs = np.zeros((J, d, d))
    for j in range(J):
        yj = y[treatment == j]
        means[j] = yj.mean(axis=0)
        dev = yj - means[j]
        covs[j] = dev.T @ dev / (counts[j] - 1)
    if check:
        bad = degenerate_cells(means, covs)
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            name = labels[j] if labels is not None else j
            raise DegenerateVariance(f"arm {name!r} has a singular sample covariance")
    return GroupSummaries(counts=counts, means=means, covs=covs)
