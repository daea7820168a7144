"""Pure numpy/scipy fallbacks for the compiled kernels in ``_ckernels``.

Same signatures and results; used when the extension is not built or when
``UOIS_PURE_PYTHON=1`` is set.
"""

import numpy as np
from scipy.signal import fftconvolve


def bin_intervals(lut, num_bins):
    nr, nc = lut.shape
    lo = np.full((num_bins, nr), nc, dtype=np.int32)
    hi = np.full((num_bins, nr), -1, dtype=np.int32)
    for b in range(num_bins):
        hit = lut == b
        rows = hit.any(axis=1)
        lo[b, rows] = np.argmax(hit[rows], axis=1)
        hi[b, rows] = nc - 1 - np.argmax(hit[rows][:, ::-1], axis=1)
    return lo, hi


def cone_votes(src_r, src_c, src_bin, lut, lo, hi, r0, c0, r1, c1):
    """Vote counts via one FFT convolution per occupied bin.

    Source indicators are convolved with the bin's cone kernel; counts are
    integers far below 2**52 so rounding the float result is exact.
    """
    h, w = r1 - r0, c1 - c0
    hr = (lut.shape[0] + 1) // 2 - 1
    wc = (lut.shape[1] + 1) // 2 - 1
    acc = np.zeros((h, w), dtype=np.int64)
    src_r = np.asarray(src_r) - r0
    src_c = np.asarray(src_c) - c0
    src_bin = np.asarray(src_bin)
    kernels = lut[hr - (h - 1): hr + h, wc - (w - 1): wc + w]
    for b in np.unique(src_bin):
        sel = src_bin == b
        sources = np.zeros((h, w))
        np.add.at(sources, (src_r[sel], src_c[sel]), 1.0)
        kernel = (kernels == b).astype(np.float64)
        if not kernel.any():
            continue
        full = fftconvolve(sources, kernel, mode="full")
        acc += np.rint(full[h - 1: 2 * h - 1, w - 1: 2 * w - 1]).astype(np.int64)
    return acc.astype(np.int32)


def span_votes(src_r, src_c, src_bin, lo, hi, hr, wc, r0, c0, r1, c1, chunk: int = 2048):
    """Difference-array counts for lut tables whose (bin, row) runs are contiguous."""
    h, w = r1 - r0, c1 - c0
    src_r = np.asarray(src_r, dtype=np.int64)
    src_c = np.asarray(src_c, dtype=np.int64)
    src_bin = np.asarray(src_bin, dtype=np.int64)
    rows = np.arange(r0, r1)
    diff = np.zeros(h * (w + 1), dtype=np.int64)
    for start in range(0, src_r.size, chunk):
        qr = src_r[start:start + chunk, None]
        qc = src_c[start:start + chunk, None]
        b = src_bin[start:start + chunk, None]
        li = rows[None, :] - qr + hr
        cs = np.maximum(lo[b, li] - wc + qc, c0)
        ce = np.minimum(hi[b, li] - wc + qc, c1 - 1)
        ok = cs <= ce
        base = np.broadcast_to((rows - r0)[None, :] * (w + 1), ok.shape)[ok]
        diff += np.bincount(base + (cs[ok] - c0), minlength=diff.size)
        diff -= np.bincount(base + (ce[ok] - c0 + 1), minlength=diff.size)
    acc = np.cumsum(diff.reshape(h, w + 1), axis=1)[:, :w]
    return acc.astype(np.int32)
