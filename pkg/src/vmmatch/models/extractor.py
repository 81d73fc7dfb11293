"""Clip-level feature extractors.

A small conformer-style encoder per modality: fixed average-pool + two
strided convolutions subsample the clip matrix along time, two blocks of
(feed-forward, self-attention, depthwise convolution, feed-forward) with
residuals and layer norm refine it, and a mean-pool head emits the 512-dim
clip embedding. A linear classification head over unified labels drives
pretraining and is unused downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    Conv1d,
    DepthwiseConv1d,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Tensor,
)

EMBED_DIM = 512


@dataclass(frozen=True)
class ExtractorConfig:
    in_width: int           # feature width of the clip matrix (224 or 80)
    time_pool: int          # fixed average-pool factor applied first
    conv1_kernel: int
    conv1_stride: int
    conv2_kernel: int
    conv2_stride: int
    d_model: int = 64
    heads: int = 4
    ff_hidden: int = 128
    blocks: int = 2


VIDEO_EXTRACTOR = ExtractorConfig(in_width=224, time_pool=4,
                                  conv1_kernel=8, conv1_stride=8,
                                  conv2_kernel=2, conv2_stride=2)
MUSIC_EXTRACTOR = ExtractorConfig(in_width=80, time_pool=2,
                                  conv1_kernel=8, conv1_stride=8,
                                  conv2_kernel=2, conv2_stride=2)


class ConformerBlock(Module):
    """(FF, MHSA, depthwise conv, FF) with residuals and layer norms."""

    def __init__(self, dim: int, heads: int, ff_hidden: int, rng):
        self.ff1 = FeedForward(dim, ff_hidden, rng)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.conv = DepthwiseConv1d(dim, 3, rng)
        self.ff2 = FeedForward(dim, ff_hidden, rng)
        self.ln1 = LayerNorm(dim)
        self.ln2 = LayerNorm(dim)
        self.ln3 = LayerNorm(dim)
        self.ln4 = LayerNorm(dim)

    def __call__(self, x: Tensor) -> Tensor:
        x = self.ln1(x + self.ff1(x))
        x = self.ln2(x + self.attn(x, x))
        x = self.ln3(x + self.conv(x))
        return self.ln4(x + self.ff2(x))


class ClipExtractor(Module):
    def __init__(self, cfg: ExtractorConfig, n_classes: int,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.conv1 = Conv1d(cfg.in_width, cfg.d_model,
                            cfg.conv1_kernel, cfg.conv1_stride, rng)
        self.conv2 = Conv1d(cfg.d_model, cfg.d_model,
                            cfg.conv2_kernel, cfg.conv2_stride, rng)
        self.blocks = [ConformerBlock(cfg.d_model, cfg.heads, cfg.ff_hidden, rng)
                       for _ in range(cfg.blocks)]
        self.head = Linear(cfg.d_model, EMBED_DIM, rng)
        self.classifier = Linear(EMBED_DIM, n_classes, rng)

    def _trunk(self, clips: Tensor) -> Tensor:
        """(B, T, W) clip matrices -> (B, 512) embeddings."""
        b, t, w = clips.shape
        pool = self.cfg.time_pool
        if pool > 1:
            clips = clips.reshape(b, t // pool, pool, w).mean(axis=2)
        x = self.conv1(clips).gelu()
        x = self.conv2(x).gelu()
        for block in self.blocks:
            x = block(x)
        return self.head(x.mean(axis=1))

    def embed(self, clips: Tensor) -> Tensor:
        return self._trunk(clips)

    def logits(self, clips: Tensor) -> Tensor:
        return self.classifier(self._trunk(clips))
