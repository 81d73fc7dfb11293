"""Motion statistics from coarse block-matching optical flow.

The per-clip statistic is the mean displacement magnitude of 16x16 blocks
matched between adjacent frames with a +/-8 px exhaustive SAD search. The
inner loop lives in a compiled kernel when available; a vectorized numpy
fallback with identical output is selected at import time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:  # compiled kernel, built by setup.py
    from . import _blockmatch as _kernel

    KERNEL_IMPL = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _blockmatch_py as _kernel

    KERNEL_IMPL = "numpy"

from . import _blockmatch_py as _kernel_py

BLOCK = 16
RADIUS = 8


@dataclass(frozen=True)
class FlowStat:
    """Mean per-pixel displacement magnitude over a clip (pixels/frame)."""

    m_bar: float

    def __post_init__(self):
        if not (self.m_bar >= 0.0):
            raise ValueError(f"m_bar must be >= 0, got {self.m_bar}")


def _search_offsets(radius: int = RADIUS) -> np.ndarray:
    """Candidate displacements sorted by magnitude, then (dy, dx)."""
    grid = [(dy, dx) for dy in range(-radius, radius + 1)
            for dx in range(-radius, radius + 1)]
    grid.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))
    return np.array(grid, dtype=np.int64)


_OFFSETS = _search_offsets()


def _as_u8(frame: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] float frame to 8 bits so SAD is exact integer math."""
    if frame.dtype == np.uint8:
        return np.ascontiguousarray(frame)
    return np.ascontiguousarray(np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8))


def frame_pair_displacements(prev: np.ndarray, nxt: np.ndarray,
                             use_fallback: bool = False) -> np.ndarray:
    """(nby, nbx, 2) integer best-match displacement for each block."""
    impl = _kernel_py if use_fallback else _kernel
    return np.asarray(impl.block_displacements(_as_u8(prev), _as_u8(nxt),
                                               BLOCK, _OFFSETS))


def optical_flow_stat(clip_frames: np.ndarray) -> FlowStat:
    """Mean block displacement magnitude over all adjacent frame pairs.

    Single-frame clips (and duplicated padding frames, which match at zero
    offset) yield m_bar = 0.
    """
    frames = np.asarray(clip_frames)
    if frames.ndim != 3 or frames.shape[0] < 1:
        raise ValueError("clip_frames must be (n_frames, h, w) with n_frames >= 1")
    if frames.shape[0] == 1:
        return FlowStat(0.0)
    mags = []
    for a, b in zip(frames[:-1], frames[1:]):
        disp = frame_pair_displacements(a, b)
        mags.append(np.sqrt((disp.astype(np.float64) ** 2).sum(axis=-1)).mean())
    return FlowStat(float(np.mean(mags)))
