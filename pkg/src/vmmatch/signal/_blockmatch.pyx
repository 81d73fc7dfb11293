# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled block-matching kernel.

Exhaustive SAD search over integer offsets for every block of the previous
frame. Offsets are scanned in increasing-magnitude order with strict-improve
comparison, so ties resolve to the smallest displacement; this matches the
pure-python fallback bit for bit (SAD is exact int64 arithmetic on 8-bit
pixels).
"""

import numpy as np

cimport cython
from libc.stdint cimport int64_t, uint8_t


def block_displacements(const uint8_t[:, ::1] prev,
                        const uint8_t[:, ::1] nxt,
                        int block,
                        const long[:, ::1] offsets):
    """Per-block best-match (dy, dx) of `prev` blocks inside `nxt`.

    offsets: (n, 2) candidate displacements, pre-sorted by magnitude.
    Returns an (nby, nbx, 2) int64 array.
    """
    cdef int h = prev.shape[0]
    cdef int w = prev.shape[1]
    cdef int nby = h // block
    cdef int nbx = w // block
    cdef int n_off = offsets.shape[0]
    out = np.zeros((nby, nbx, 2), dtype=np.int64)
    cdef int64_t[:, :, ::1] out_v = out
    cdef int by, bx, k, y0, x0, yy, xx, dy, dx, i, j
    cdef int64_t sad, best, diff

    for by in range(nby):
        y0 = by * block
        for bx in range(nbx):
            x0 = bx * block
            best = -1
            for k in range(n_off):
                dy = <int> offsets[k, 0]
                dx = <int> offsets[k, 1]
                yy = y0 + dy
                xx = x0 + dx
                if yy < 0 or xx < 0 or yy + block > h or xx + block > w:
                    continue
                sad = 0
                for i in range(block):
                    for j in range(block):
                        diff = (<int64_t> prev[y0 + i, x0 + j]) - (<int64_t> nxt[yy + i, xx + j])
                        if diff < 0:
                            diff = -diff
                        sad += diff
                        if best >= 0 and sad >= best:
                            break
                    if best >= 0 and sad >= best:
                        break
                if best < 0 or sad < best:
                    best = sad
                    out_v[by, bx, 0] = dy
                    out_v[by, bx, 1] = dx
    return out
