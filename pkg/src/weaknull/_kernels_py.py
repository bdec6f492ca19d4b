"""Pure NumPy implementation of the per-cell moment kernel.

Mirrors ``_kernels.pyx`` operation for operation (same summation order), so
both backends agree to the last bit on the same inputs.
"""

import numpy as np


def cell_moments(ystar, assign, offset, n_cells):
    """Counts, means and centred sums of squares per (draw, cell).

    Unit ``i`` under draw ``r`` receives arm ``a = assign[r, i]``, contributes
    ``ystar[i, a]`` and lands in cell ``offset[i] + a``.
    """
    R, N = assign.shape
    vals = ystar[np.arange(N)[None, :], assign]
    cells = (offset[None, :] + assign + (np.arange(R, dtype=np.int64) * n_cells)[:, None]).ravel()
    size = R * n_cells
    counts = np.bincount(cells, minlength=size)
    sums = np.bincount(cells, weights=vals.ravel(), minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    dev = vals.ravel() - means[cells]
    m2 = np.bincount(cells, weights=dev * dev, minlength=size)
    shape = (R, n_cells)
    return counts.reshape(shape), means.reshape(shape), m2.reshape(shape)


def cell_moments_vector(ystar, assign, offset, n_cells):
    """Vector-outcome version: ``ystar`` is ``(N, J, d)``; returns covariance sums ``(R, K, d, d)``."""
    R, N = assign.shape
    d = ystar.shape[2]
    vals = ystar[np.arange(N)[None, :], assign]  # (R, N, d)
    cells = (offset[None, :] + assign + (np.arange(R, dtype=np.int64) * n_cells)[:, None]).ravel()
    size = R * n_cells
    counts = np.bincount(cells, minlength=size)
    flat = vals.reshape(-1, d)
    means = np.empty((size, d))
    for k in range(d):
        s = np.bincount(cells, weights=flat[:, k], minlength=size)
        means[:, k] = np.where(counts > 0, s / np.maximum(counts, 1), 0.0)
    dev = flat - means[cells]
    m2 = np.empty((size, d, d))
    for k in range(d):
        for l in range(k, d):
            m2[:, k, l] = m2[:, l, k] = np.bincount(cells, weights=dev[:, k] * dev[:, l], minlength=size)
    return counts.reshape(R, n_cells), means.reshape(R, n_cells, d), m2.reshape(R, n_cells, d, d)
