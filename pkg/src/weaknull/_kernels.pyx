# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-cell moment kernel for the randomization loop."""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()


def cell_moments(const double[:, ::1] ystar, const int64_t[:, ::1] assign,
                 const int64_t[::1] offset, Py_ssize_t n_cells):
    """Counts, means and centred sums of squares per (draw, cell).

    Unit ``i`` under draw ``r`` receives arm ``a = assign[r, i]``, contributes
    ``ystar[i, a]`` and lands in cell ``offset[i] + a``.
    """
    cdef Py_ssize_t R = assign.shape[0]
    cdef Py_ssize_t N = assign.shape[1]
    cdef Py_ssize_t r, i, c
    cdef int64_t a
    cdef double v, dev

    counts_arr = np.zeros((R, n_cells), dtype=np.int64)
    means_arr = np.zeros((R, n_cells), dtype=np.float64)
    m2_arr = np.zeros((R, n_cells), dtype=np.float64)
    cdef int64_t[:, ::1] counts = counts_arr
    cdef double[:, ::1] means = means_arr
    cdef double[:, ::1] m2 = m2_arr

    with nogil:
        for r in range(R):
            for i in range(N):
                a = assign[r, i]
                c = offset[i] + a
                counts[r, c] += 1
                means[r, c] += ystar[i, a]
            for c in range(n_cells):
                if counts[r, c] > 0:
                    means[r, c] = means[r, c] / counts[r, c]
            for i in range(N):
                a = assign[r, i]
                c = offset[i] + a
                dev = ystar[i, a] - means[r, c]
                m2[r, c] += dev * dev
    return counts_arr, means_arr, m2_arr
