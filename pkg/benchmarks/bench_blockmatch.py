"""Compare the compiled block-matching kernel against the numpy fallback.

Run: python3 benchmarks/bench_blockmatch.py [--frames N] [--size PX]
Both implementations must produce identical displacement fields; the script
exits nonzero if they disagree.
"""

import argparse
import sys
import time

import numpy as np

from vmmatch.signal.flow import KERNEL_IMPL, frame_pair_displacements


def make_frames(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    base = rng.random((size + 64, size + 64)).astype(np.float64)
    frames = np.empty((n, size, size))
    for i in range(n):
        dx = (3 * i) % 32
        frames[i] = base[dx:dx + size, dx:dx + size]
    return frames


def bench(frames: np.ndarray, use_fallback: bool) -> tuple[float, list]:
    fields = []
    t0 = time.perf_counter()
    for a, b in zip(frames[:-1], frames[1:]):
        fields.append(frame_pair_displacements(a, b, use_fallback=use_fallback))
    return time.perf_counter() - t0, fields


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=12)
    ap.add_argument("--size", type=int, default=224)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"active kernel: {KERNEL_IMPL}")
    frames = make_frames(args.frames, args.size, np.random.default_rng(args.seed))

    t_py, fields_py = bench(frames, use_fallback=True)
    t_native, fields_native = bench(frames, use_fallback=False)

    pairs = args.frames - 1
    print(f"numpy fallback : {t_py:.3f}s  ({t_py / pairs * 1e3:7.1f} ms/pair)")
    print(f"selected kernel: {t_native:.3f}s  ({t_native / pairs * 1e3:7.1f} ms/pair)")
    if KERNEL_IMPL != "numpy":
        print(f"speedup: {t_py / t_native:.1f}x")

    for i, (a, b) in enumerate(zip(fields_py, fields_native)):
        if not np.array_equal(a, b):
            print(f"MISMATCH at frame pair {i}", file=sys.stderr)
            return 1
    print("outputs identical across implementations")
    return 0


if __name__ == "__main__":
    sys.exit(main())
