"""Backend selection for the hot per-draw moment kernel.

The compiled Cython kernel is used when it was built; otherwise the NumPy
implementation takes over. Set ``WEAKNULL_BACKEND=python`` to force the
fallback (``cython`` to insist on the compiled one).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_requested = os.environ.get("WEAKNULL_BACKEND", "auto").lower()
if _requested == "cython" and _compiled is None:
    raise ImportError("WEAKNULL_BACKEND=cython but the compiled extension is not available")

BACKENDS = {"python": _kernels_py.cell_moments}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.cell_moments

BACKEND = "python" if _requested == "python" or _compiled is None else "cython"


def cell_moments(ystar, assign, offset, n_cells, backend: str | None = None):
    """Per-draw, per-cell counts, means and covariances.

    ``ystar`` is ``(N, J, d)``, ``assign`` ``(R, N)`` arm codes, ``offset``
    ``(N,)`` cell offsets (``stratum * J``). Returns ``counts (R, K)``,
    ``means (R, K, d)`` and ``covs (R, K, d, d)`` with divisor ``n - 1``.
    """
    ystar = np.asarray(ystar, dtype=np.float64)
    assign = np.ascontiguousarray(assign, dtype=np.int64)
    offset = np.ascontiguousarray(offset, dtype=np.int64)
    d = ystar.shape[2]
    if d == 1:
        fn = BACKENDS[backend or BACKEND]
        counts, means, m2 = fn(np.ascontiguousarray(ystar[:, :, 0]), assign, offset, n_cells)
        means = means[..., None]
        m2 = m2[..., None, None]
    else:
        counts, means, m2 = _kernels_py.cell_moments_vector(ystar, assign, offset, n_cells)
    with np.errstate(invalid="ignore", divide="ignore"):
        covs = m2 / (counts - 1)[..., None, None]
    return counts, means, covs
