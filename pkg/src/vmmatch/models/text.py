"""Deterministic hashed text embedder for tag strings.

Character n-grams (with boundary markers) are hashed into a fixed bucket
count with blake2b, the bucket counts are projected by a constant seeded
Gaussian matrix to 768 dimensions and L2-normalized. No trainable state;
the only properties relied on downstream are determinism and pairwise
distinctness over the vocabulary.
"""

from __future__ import annotations

import hashlib

import numpy as np

TEXT_DIM = 768
_BUCKETS = 4096
_NGRAM_RANGE = (3, 5)
_PROJECTION_SEED = 0xC0FFEE


_projection: np.ndarray | None = None


def _projection_matrix() -> np.ndarray:
    global _projection
    if _projection is None:
        rng = np.random.default_rng(_PROJECTION_SEED)
        _projection = rng.standard_normal((_BUCKETS, TEXT_DIM)) / np.sqrt(_BUCKETS)
    return _projection


def _ngrams(text: str):
    padded = f"^{text}$"
    for n in range(_NGRAM_RANGE[0], _NGRAM_RANGE[1] + 1):
        if len(padded) < n:
            yield padded
            continue
        for i in range(len(padded) - n + 1):
            yield padded[i:i + n]


def text_embed(tag: str) -> np.ndarray:
    """768-dim unit-norm embedding of a tag string."""
    counts = np.zeros(_BUCKETS)
    for gram in _ngrams(tag):
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        counts[int.from_bytes(digest, "little") % _BUCKETS] += 1.0
    vec = counts @ _projection_matrix()
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError(f"cannot embed empty tag {tag!r}")
    return vec / norm
