"""Pure-numpy block matching, the fallback for the compiled kernel.

Semantics match the Cython kernel exactly: integer SAD on 8-bit pixels,
offsets scanned in increasing-magnitude order, ties kept at the first
(smallest) offset. `np.argmin` returns the first occurrence of the minimum,
which reproduces the strict-improve scan of the compiled loop.
"""

from __future__ import annotations

import numpy as np


def block_displacements(prev: np.ndarray, nxt: np.ndarray, block: int,
                        offsets: np.ndarray) -> np.ndarray:
    h, w = prev.shape
    nby, nbx = h // block, w // block
    n_off = offsets.shape[0]
    sads = np.full((n_off, nby, nbx), np.iinfo(np.int64).max, dtype=np.int64)
    p = prev.astype(np.int64)
    n = nxt.astype(np.int64)
    for k, (dy, dx) in enumerate(offsets):
        # block (by, bx) is valid iff its shifted copy stays inside the frame
        by_lo = 0 if dy >= 0 else int(np.ceil(-dy / block))
        by_hi = nby if dy <= 0 else (h - dy) // block
        bx_lo = 0 if dx >= 0 else int(np.ceil(-dx / block))
        bx_hi = nbx if dx <= 0 else (w - dx) // block
        if by_lo >= by_hi or bx_lo >= bx_hi:
            continue
        y0, y1 = by_lo * block, by_hi * block
        x0, x1 = bx_lo * block, bx_hi * block
        diff = np.abs(p[y0:y1, x0:x1] - n[y0 + dy:y1 + dy, x0 + dx:x1 + dx])
        per_block = diff.reshape(by_hi - by_lo, block, bx_hi - bx_lo, block).sum(axis=(1, 3))
        sads[k, by_lo:by_hi, bx_lo:bx_hi] = per_block
    best = np.argmin(sads, axis=0)
    return offsets[best]
