"""Contrast matrices, their completion, presets and hypothesis objects."""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import (
    BadDoses,
    CapExceeded,
    ContrastError,
    CrossEntryComparison,
    NotContrast,
    RankDeficient,
)

CONTRAST_RTOL = 1e-10
MAX_FACTORS = 10  # 2**10 arms


def _as_matrix(C, J: int | None = None) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[None, :] if C.size else C.reshape(0, J or 0)
    if C.ndim != 2:
        raise ContrastError("contrast must be a vector or a matrix")
    return C


def validate_contrast(C) -> np.ndarray:
    """Return ``C`` as a float matrix after checking it is a full-rank contrast."""
    C = _as_matrix(C)
    m, J = C.shape
    if m == 0:
        return C
    scale = np.abs(C).max()
    if scale == 0 or np.abs(C.sum(axis=1)).max() > CONTRAST_RTOL * scale:
        raise NotContrast("every row of a contrast matrix must sum to zero")
    if m > J - 1:
        raise RankDeficient(f"{m} contrast rows over {J} arms; at most {J - 1} are independent")
    if np.linalg.matrix_rank(C) < m:
        raise RankDeficient("contrast rows are linearly dependent")
    return C


def complete_contrast(C) -> np.ndarray:
    """Orthonormal rows spanning the complement of ``rowspace(C) + span(1)``.

    Modified Gram-Schmidt, seeded with the all-ones direction and the rows of
    ``C``, then the standard basis vectors in index order; the output is
    therefore deterministic. Returns a ``(J - m - 1, J)`` array, empty when
    ``m = J - 1``.
    """
    C = validate_contrast(C)
    m, J = C.shape
    basis: list[np.ndarray] = []

    def reduce(v):
        v = v.astype(float).copy()
        for b in basis:
            v -= (b @ v) * b
        return v

    for v in [np.ones(J), *C]:
        r = reduce(v)
        basis.append(r / np.linalg.norm(r))
    out = []
    for k in range(J):
        if len(out) == J - m - 1:
            break
        r = reduce(np.eye(J)[k])
        # re-orthogonalize once; the standard basis can be nearly dependent
        r = reduce(r)
        norm = np.linalg.norm(r)
        if norm > 1e-8:
            r /= norm
            basis.append(r)
            out.append(r)
    return np.array(out).reshape(J - m - 1, J)


@dataclass(frozen=True)
class ContrastBlock:
    """Contrast for one outcome coordinate plus its sharp-null completion."""

    C: np.ndarray
    x: np.ndarray
    C_tilde: np.ndarray
    x_tilde: np.ndarray

    @property
    def m(self) -> int:
        return int(self.C.shape[0])

    @property
    def J(self) -> int:
        return int(self.C.shape[1])


def make_block(C, x=None, C_tilde=None, x_tilde=None, J: int | None = None) -> ContrastBlock:
    C = validate_contrast(_as_matrix(C, J))
    m, J = C.shape
    x = np.zeros(m) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (m,):
        raise ContrastError(f"target has length {x.shape[0]}, contrast has {m} rows")
    if C_tilde is None:
        C_tilde = complete_contrast(C) if m else complete_contrast(np.zeros((0, J)))
    else:
        C_tilde = _as_matrix(C_tilde, J)
        stack = np.vstack([C, C_tilde, np.ones((1, J))])
        if stack.shape != (J, J) or np.linalg.matrix_rank(stack) < J:
            raise RankDeficient("stack of C, C_tilde and the ones row must be invertible")
    k = C_tilde.shape[0]
    x_tilde = np.zeros(k) if x_tilde is None else np.atleast_1d(np.asarray(x_tilde, dtype=float))
    if x_tilde.shape != (k,):
        raise ContrastError(f"x_tilde must have length {k}")
    return ContrastBlock(C=C, x=x, C_tilde=C_tilde, x_tilde=x_tilde)


@dataclass(frozen=True)
class Hypothesis:
    """Null hypothesis ``C mean = x`` together with the sharp null used to impute.

    ``blocks`` holds one :class:`ContrastBlock` per outcome coordinate
    (a single block for scalar outcomes). ``stratum_targets`` optionally
    gives per-stratum targets ``x_[h]`` for stratified designs; their
    size-weighted average must equal ``x``.
    """

    blocks: tuple[ContrastBlock, ...]
    orientation: str = "two_sided"
    stratum_targets: tuple[np.ndarray, ...] | None = None
    stratum_tilde_targets: tuple[np.ndarray, ...] | None = None

    @property
    def J(self) -> int:
        return self.blocks[0].J

    @property
    def d(self) -> int:
        return len(self.blocks)

    @property
    def m(self) -> int:
        return sum(b.m for b in self.blocks)

    @property
    def C(self) -> np.ndarray:
        """Contrast over the arm-major stacked mean vector of length ``J * d``."""
        d = self.d
        rows = [np.kron(b.C, np.eye(d)[k][None, :]) for k, b in enumerate(self.blocks)]
        return np.vstack(rows)

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([b.x for b in self.blocks])

    def split(self, x) -> list[np.ndarray]:
        """Split a full-length target into per-block pieces."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.m,):
            raise ContrastError(f"target must have length {self.m}")
        cuts = np.cumsum([b.m for b in self.blocks])[:-1]
        return np.split(x, cuts)

    def with_target(self, x) -> "Hypothesis":
        """Same contrasts and completion, new target ``x``; per-stratum targets are dropped."""
        parts = self.split(x)
        blocks = tuple(replace(b, x=p) for b, p in zip(self.blocks, parts))
        return replace(self, blocks=blocks, stratum_targets=None, stratum_tilde_targets=None)

    def with_stratum_targets(self, targets, tilde_targets=None) -> "Hypothesis":
        targets = tuple(np.atleast_1d(np.asarray(t, dtype=float)) for t in targets)
        for t in targets:
            if t.shape != (self.m,):
                raise ContrastError(f"each stratum target must have length {self.m}")
        if tilde_targets is not None:
            tilde_targets = tuple(np.atleast_1d(np.asarray(t, dtype=float)) for t in tilde_targets)
        return replace(self, stratum_targets=targets, stratum_tilde_targets=tilde_targets)


def make_hypothesis(
    C,
    x=None,
    C_tilde=None,
    x_tilde=None,
    orientation: str = "two_sided",
    allow_multirow_one_sided: bool = False,
) -> Hypothesis:
    """Scalar-outcome hypothesis ``C mean = x`` (or ``C mean >= x`` one-sided)."""
    if orientation not in ("two_sided", "one_sided_ge"):
        raise ContrastError(f"unknown orientation {orientation!r}")
    block = make_block(C, x, C_tilde, x_tilde)
    if block.m == 0:
        raise ContrastError("contrast matrix has no rows")
    if orientation == "one_sided_ge" and block.m != 1 and not allow_multirow_one_sided:
        raise ContrastError("one-sided hypotheses need a single contrast row (use Bonferroni for more)")
    return Hypothesis(blocks=(block,), orientation=orientation)


def assemble_vector_contrast(blocks: Sequence, d: int | None = None) -> Hypothesis:
    """Hypothesis for d-vector outcomes from one ``(C_k, x_k)`` pair per coordinate.

    ``C_k`` may have zero rows (no restriction on that coordinate). Each
    pair may also be a bare matrix, in which case ``x_k = 0``.
    """
    if d is not None and len(blocks) != d:
        raise ContrastError(f"expected {d} blocks, got {len(blocks)}")
    J = None
    for item in blocks:
        Ck = item[0] if isinstance(item, tuple) else item
        Ck = np.asarray(Ck, dtype=float)
        if Ck.size:
            J = Ck.shape[-1]
            break
    if J is None:
        raise ContrastError("at least one coordinate needs a non-empty contrast")
    built = []
    for item in blocks:
        Ck, xk = item if isinstance(item, tuple) else (item, None)
        Ck = _as_matrix(Ck, J)
        if Ck.size == 0:
            Ck = np.zeros((0, J))
        if Ck.shape[1] != J:
            raise ContrastError("all coordinate contrasts must cover the same arms")
        built.append(make_block(Ck, xk, J=J))
    return Hypothesis(blocks=tuple(built))


def split_vector_contrast(C, d: int, x=None) -> Hypothesis:
    """Inverse of :func:`assemble_vector_contrast` for a full ``m x (J d)`` matrix.

    Rows touching more than one outcome coordinate compare different
    outcomes across arms and are rejected.
    """
    C = _as_matrix(C)
    m, Jd = C.shape
    if Jd % d:
        raise ContrastError(f"contrast has {Jd} columns, not a multiple of d={d}")
    J = Jd // d
    x = np.zeros(m) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    rows: list[list] = [[] for _ in range(d)]
    targets: list[list] = [[] for _ in range(d)]
    for r in range(m):
        per = C[r].reshape(J, d)
        used = np.flatnonzero(np.abs(per).max(axis=0) > 0)
        if used.size != 1:
            raise CrossEntryComparison(
                f"row {r + 1} mixes outcome coordinates; only coordinate-wise contrasts are allowed"
            )
        k = int(used[0])
        rows[k].append(per[:, k])
        targets[k].append(x[r])
    return assemble_vector_contrast(
        [(np.array(rk).reshape(len(rk), J), np.array(tk)) for rk, tk in zip(rows, targets)]
    )


# -- presets ----------------------------------------------------------------


@dataclass(frozen=True)
class ModelMatrix2K:
    """Model matrix of a 2^K factorial design; rows are the factorial effects."""

    K: int
    G: np.ndarray
    labels: tuple[str, ...]

    def rows(self, subset: Sequence[int]) -> np.ndarray:
        """Rows for 1-based effect indices."""
        return self.G[[a - 1 for a in subset]]


def model_matrix(K: int, cap: int = MAX_FACTORS) -> ModelMatrix2K:
    """Build ``G``: main effects first, then 2-way, ..., the K-way interaction last."""
    if K < 1:
        raise ContrastError("need at least one factor")
    if K > cap:
        raise CapExceeded(f"2^{K} arms exceeds the cap of 2^{cap}")
    J = 2**K
    mains = []
    for j in range(1, K + 1):
        half = 2 ** (K - j)
        mains.append(np.tile(np.r_[-np.ones(half, dtype=np.int64), np.ones(half, dtype=np.int64)], 2 ** (j - 1)))
    rows, labels = [], []
    for order in range(1, K + 1):
        for combo in combinations(range(K), order):
            g = np.ones(J, dtype=np.int64)
            for k in combo:
                g = g * mains[k]
            rows.append(g)
            labels.append(":".join(f"F{k + 1}" for k in combo))
    return ModelMatrix2K(K=K, G=np.array(rows), labels=tuple(labels))


def anova_contrast(J: int) -> np.ndarray:
    """``(1_{J-1}, -I_{J-1})``: every arm compared with the first."""
    if J < 2:
        raise ContrastError("ANOVA needs at least two arms")
    return np.hstack([np.ones((J - 1, 1)), -np.eye(J - 1)])


def treatment_control_contrast(J: int = 2) -> np.ndarray:
    if J != 2:
        raise ContrastError("the treatment-control preset needs exactly two arms")
    return np.array([[1.0, -1.0]])


def trend_contrast(doses, counts) -> np.ndarray:
    """Single row ``a_j - a_+ N_j / N`` for doses ``a`` and arm sizes ``N_j``."""
    a = np.asarray(doses, dtype=float)
    n = np.asarray(counts, dtype=float)
    if a.shape != n.shape:
        raise BadDoses(f"{a.size} doses for {n.size} arms")
    if np.ptp(a) == 0:
        raise BadDoses("doses are constant")
    row = a - a.sum() * n / n.sum()
    if np.abs(row).max() <= CONTRAST_RTOL * np.abs(a).max():
        raise BadDoses("doses give a zero contrast row")
    return row[None, :]


def factorial_contrast(K: int, subset: Sequence[int]) -> np.ndarray:
    """Rows ``g_a`` of the model matrix for 1-based effect indices ``a`` in ``subset``."""
    G = model_matrix(K)
    if not subset or any(a < 1 or a > 2**K - 1 for a in subset):
        raise ContrastError(f"effect indices must lie in 1..{2**K - 1}")
    return G.rows(subset).astype(float)


def preset_contrast(kind: str, J: int | None = None, **kw) -> Hypothesis:
    """Hypothesis skeleton (target 0) for a named preset.

    kinds: ``anova`` (J), ``treatment_control`` (J=2), ``trend``
    (``doses``, ``counts``), ``factorial`` (``K``, ``subset``).
    """
    if kind == "anova":
        C = anova_contrast(J)
    elif kind in ("treatment_control", "tc"):
        C = treatment_control_contrast(J if J is not None else 2)
    elif kind == "trend":
        C = trend_contrast(kw["doses"], kw["counts"])
    elif kind in ("factorial", "factorial_subset"):
        C = factorial_contrast(kw["K"], kw["subset"])
    else:
        raise ContrastError(f"unknown preset {kind!r}")
    if J is not None and C.shape[1] != J:
        raise ContrastError(f"preset {kind!r} covers {C.shape[1]} arms, data has {J}")
    return make_hypothesis(C, orientation=kw.get("orientation", "two_sided"))
