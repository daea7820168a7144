# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled vote accumulation for the Hough voting layer."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def bin_intervals(const cnp.int16_t[:, ::1] lut, int num_bins):
    """Per (bin, row offset) min/max column offset whose lut entry equals bin."""
    cdef Py_ssize_t nr = lut.shape[0], nc = lut.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] lo_arr = np.full((num_bins, nr), nc, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] hi_arr = np.full((num_bins, nr), -1, dtype=np.int32)
    cdef cnp.int32_t[:, ::1] lo = lo_arr
    cdef cnp.int32_t[:, ::1] hi = hi_arr
    cdef Py_ssize_t i, j
    cdef int b
    for i in range(nr):
        for j in range(nc):
            b = lut[i, j]
            if b < 0:
                continue
            if j < lo[b, i]:
                lo[b, i] = <cnp.int32_t>j
            if j > hi[b, i]:
                hi[b, i] = <cnp.int32_t>j
    return lo_arr, hi_arr


def cone_votes(
    const cnp.int32_t[::1] src_r,
    const cnp.int32_t[::1] src_c,
    const cnp.int32_t[::1] src_bin,
    const cnp.int16_t[:, ::1] lut,
    const cnp.int32_t[:, ::1] lo,
    const cnp.int32_t[:, ::1] hi,
    int r0, int c0, int r1, int c1,
):
    """Count, for every pixel in the window [r0, r1) x [c0, c1), the sources
    whose direction bin contains the source-to-pixel offset.

    ``lut`` is indexed by (drow + H - 1, dcol + W - 1) for the full image
    grid, and ``lo``/``hi`` are its per-row column extents per bin (in lut
    column coordinates). Each source rasterizes only the rows and column
    spans its cone can reach.
    """
    cdef Py_ssize_t n = src_r.shape[0]
    cdef int hr = (lut.shape[0] + 1) // 2 - 1
    cdef int wc = (lut.shape[1] + 1) // 2 - 1
    cdef cnp.ndarray[cnp.int32_t, ndim=2] acc_arr = np.zeros((r1 - r0, c1 - c0), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] acc = acc_arr
    cdef Py_ssize_t k
    cdef int qr, qc, b, r, li, cstart, cend, c
    with nogil:
        for k in range(n):
            qr = src_r[k]
            qc = src_c[k]
            b = src_bin[k]
            for r in range(r0, r1):
                li = r - qr + hr
                if lo[b, li] > hi[b, li]:
                    continue
                cstart = lo[b, li] - wc + qc
                cend = hi[b, li] - wc + qc
                if cstart < c0:
                    cstart = c0
                if cend > c1 - 1:
                    cend = c1 - 1
                for c in range(cstart, cend + 1):
                    if lut[li, c - qc + wc] == b:
                        acc[r - r0, c - c0] += 1
    return acc_arr


def span_votes(
    const cnp.int32_t[::1] src_r,
    const cnp.int32_t[::1] src_c,
    const cnp.int32_t[::1] src_bin,
    const cnp.int32_t[:, ::1] lo,
    const cnp.int32_t[:, ::1] hi,
    int hr, int wc,
    int r0, int c0, int r1, int c1,
):
    """Same counts as :func:`cone_votes` when every (bin, row) run of the
    lut is contiguous: each source adds one span per row to a difference
    array, which is then prefix-summed along columns.
    """
    cdef Py_ssize_t n = src_r.shape[0]
    cdef int w = c1 - c0
    cdef cnp.ndarray[cnp.int32_t, ndim=2] diff_arr = np.zeros((r1 - r0, w + 1), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] diff = diff_arr
    cdef Py_ssize_t k
    cdef int qr, qc, b, r, li, cstart, cend, c
    with nogil:
        for k in range(n):
            qr = src_r[k]
            qc = src_c[k]
            b = src_bin[k]
            for r in range(r0, r1):
                li = r - qr + hr
                if lo[b, li] > hi[b, li]:
                    continue
                cstart = lo[b, li] - wc + qc
                cend = hi[b, li] - wc + qc
                if cstart < c0:
                    cstart = c0
                if cend > c1 - 1:
                    cend = c1 - 1
                if cstart > cend:
                    continue
                diff[r - r0, cstart - c0] += 1
                diff[r - r0, cend - c0 + 1] -= 1
        for r in range(r1 - r0):
            for c in range(1, w):
                diff[r, c] += diff[r, c - 1]
    return diff_arr[:, :w].copy()
