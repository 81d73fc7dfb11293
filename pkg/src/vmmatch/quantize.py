"""Uniform-bin discretization of rhythm/flow statistics plus trainable
embedding tables forming the 512-dim rhythm and flow plug-in vectors.

Rhythm: beat count (capped integer, 256-dim), mean beat strength (128-dim)
and mean inter-beat interval (128-dim) concatenate to 512. Flow: one 512-dim
table over mean displacement. Continuous statistics get one reserved extra
bucket for undefined values (e.g. interval with fewer than two beats).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .nn import Module, Tensor, concat, embedding
from .signal import FlowStat, RhythmStats

N_BEAT_DIM, S_BEAT_DIM, L_BAR_DIM, M_BAR_DIM = 256, 128, 128, 512
DEFAULT_BINS = 32
DEFAULT_N_BEAT_CAP = 32


@dataclass(frozen=True)
class Binning:
    """Uniform bins over [min, max]; index bin_count is the undefined bucket."""

    min: float
    max: float
    bin_count: int = DEFAULT_BINS

    def __post_init__(self):
        if not (self.min < self.max):
            raise ValueError("binning requires min < max")
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")

    @property
    def rows(self) -> int:
        return self.bin_count + 1

    def index(self, value: float | None) -> int:
        if value is None:
            return self.bin_count
        value = float(value)
        if math.isnan(value):
            raise ValueError("cannot discretize NaN")
        width = (self.max - self.min) / self.bin_count
        return int(np.clip(math.floor((value - self.min) / width), 0,
                           self.bin_count - 1))


@dataclass(frozen=True)
class BinSpec:
    s_beat: Binning
    l_bar: Binning
    m_bar: Binning
    n_beat_cap: int = DEFAULT_N_BEAT_CAP

    def n_beat_index(self, n_beat: int) -> int:
        if n_beat < 0:
            raise ValueError("n_beat must be >= 0")
        return min(int(n_beat), self.n_beat_cap)

    def to_dict(self) -> dict:
        return {"s_beat": asdict(self.s_beat), "l_bar": asdict(self.l_bar),
                "m_bar": asdict(self.m_bar), "n_beat_cap": self.n_beat_cap}

    @classmethod
    def from_dict(cls, d: dict) -> "BinSpec":
        return cls(Binning(**d["s_beat"]), Binning(**d["l_bar"]),
                   Binning(**d["m_bar"]), d["n_beat_cap"])


def default_binspec() -> BinSpec:
    return BinSpec(Binning(0.0, 100.0), Binning(0.05, 2.0), Binning(0.0, 8.0))


def calibrate_binspec(rhythm_stats: list[RhythmStats],
                      flow_stats: list[FlowStat],
                      bin_count: int = DEFAULT_BINS,
                      n_beat_cap: int = DEFAULT_N_BEAT_CAP) -> BinSpec:
    """Bin ranges from the 1st-99th percentiles of training statistics."""

    def rng_of(values, fallback):
        values = [v for v in values if v is not None]
        if not values:
            return fallback
        lo, hi = np.percentile(values, [1.0, 99.0])
        if hi - lo < 1e-9:
            lo, hi = lo - 0.5, hi + 0.5
        return float(lo), float(hi)

    s_lo, s_hi = rng_of([r.s_beat for r in rhythm_stats], (0.0, 100.0))
    l_lo, l_hi = rng_of([r.l_bar for r in rhythm_stats], (0.05, 2.0))
    m_lo, m_hi = rng_of([f.m_bar for f in flow_stats], (0.0, 8.0))
    return BinSpec(Binning(s_lo, s_hi, bin_count), Binning(l_lo, l_hi, bin_count),
                   Binning(m_lo, m_hi, bin_count), n_beat_cap)


def discretize_rhythm(stats: RhythmStats, spec: BinSpec) -> tuple[int, int, int]:
    return (spec.n_beat_index(stats.n_beat),
            spec.s_beat.index(stats.s_beat),
            spec.l_bar.index(stats.l_bar))


def discretize_flow(stat: FlowStat, spec: BinSpec) -> int:
    return spec.m_bar.index(stat.m_bar)


class QuantEmbedTables(Module):
    """Trainable lookup tables for discretized rhythm/flow statistics."""

    def __init__(self, spec: BinSpec, rng: np.random.Generator,
                 scale: float = 0.05):
        self.spec = spec
        self.n_beat = Tensor(rng.uniform(-scale, scale,
                                         (spec.n_beat_cap + 1, N_BEAT_DIM)),
                             requires_grad=True)
        self.s_beat = Tensor(rng.uniform(-scale, scale,
                                         (spec.s_beat.rows, S_BEAT_DIM)),
                             requires_grad=True)
        self.l_bar = Tensor(rng.uniform(-scale, scale,
                                        (spec.l_bar.rows, L_BAR_DIM)),
                            requires_grad=True)
        self.m_bar = Tensor(rng.uniform(-scale, scale,
                                        (spec.m_bar.rows, M_BAR_DIM)),
                            requires_grad=True)

    def rhythm_embedding(self, bins: np.ndarray) -> Tensor:
        """bins: (..., 3) int indices -> (..., 512) concat(n, s, l)."""
        bins = np.asarray(bins, dtype=np.int64)
        return concat([embedding(self.n_beat, bins[..., 0]),
                       embedding(self.s_beat, bins[..., 1]),
                       embedding(self.l_bar, bins[..., 2])], axis=-1)

    def flow_embedding(self, bins: np.ndarray) -> Tensor:
        """bins: (...,) int indices -> (..., 512)."""
        return embedding(self.m_bar, np.asarray(bins, dtype=np.int64))


def rhythm_embedding(stats: RhythmStats, tables: QuantEmbedTables) -> Tensor:
    return tables.rhythm_embedding(np.array(discretize_rhythm(stats, tables.spec)))


def flow_embedding(stat: FlowStat, tables: QuantEmbedTables) -> Tensor:
    return tables.flow_embedding(np.array(discretize_flow(stat, tables.spec)))
