"""Onset envelope, dynamic-programming beat tracking, and rhythm statistics.

The tracker is Ellis-style: a spectral-flux onset envelope, an
autocorrelation tempo estimate, then DP alignment that rewards envelope
energy and penalizes log-deviation of inter-beat intervals from the tempo
period. Beats are tracked once over the full track and bucketed into clips
by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import LOG_FLOOR, SAMPLE_RATE, STFT_HOP, STFT_WIN, stft_log_mel

HOP_SECONDS = STFT_HOP / SAMPLE_RATE
# a transient landing at time t first appears in the analysis frame whose
# window merely touches it, up to (win-1)/sr early; shifting reported beat
# times by a hair over that bias keeps boundary beats in their true clip
BEAT_TIME_OFFSET = STFT_WIN / SAMPLE_RATE

DEFAULT_BPM_RANGE = (30.0, 300.0)
_TIGHTNESS = 100.0


@dataclass
class RhythmStats:
    """Per-clip beat statistics; l_bar is None when fewer than 2 beats."""

    n_beat: int
    s_beat: float
    l_bar: float | None

    def __post_init__(self):
        if self.n_beat < 0:
            raise ValueError("n_beat must be >= 0")
        if self.n_beat < 2 and self.l_bar is not None:
            raise ValueError("l_bar is undefined with fewer than 2 beats")


def onset_envelope(pcm: np.ndarray) -> np.ndarray:
    """Half-wave-rectified spectral flux of the log-mel spectrogram."""
    logmel = stft_log_mel(pcm)
    prev = np.vstack([np.full((1, logmel.shape[1]), np.log(LOG_FLOOR)), logmel[:-1]])
    return np.maximum(logmel - prev, 0.0).sum(axis=1)


def estimate_period(envelope: np.ndarray,
                    bpm_range: tuple[float, float] = DEFAULT_BPM_RANGE) -> float:
    """Dominant inter-beat period in hops, via autocorrelation."""
    env = envelope - envelope.mean()
    min_lag = max(2, int(round(60.0 / bpm_range[1] / HOP_SECONDS)))
    max_lag = min(env.size - 1, int(round(60.0 / bpm_range[0] / HOP_SECONDS)))
    if max_lag <= min_lag:
        return float(min_lag)
    lags = np.arange(min_lag, max_lag + 1)
    ac = np.array([np.dot(env[:-lag], env[lag:]) for lag in lags])
    # log-Gaussian tempo prior (centered at 120 BPM, 1-octave sd) so a
    # harmonic at double/triple the true period cannot outscore it when the
    # true period is a non-integer number of hops
    bpm = 60.0 / (lags * HOP_SECONDS)
    prior = np.exp(-0.5 * np.log2(bpm / 120.0) ** 2)
    return float(lags[int(np.argmax(ac * prior))])


def track_beats(envelope: np.ndarray,
                bpm_range: tuple[float, float] = DEFAULT_BPM_RANGE
                ) -> tuple[np.ndarray, np.ndarray]:
    """DP beat tracking over an onset envelope.

    Returns (beat_times_seconds, beat_strengths). Strengths are raw envelope
    values at the chosen frames. All-zero envelopes yield no beats.
    """
    envelope = np.asarray(envelope, dtype=np.float64)
    if envelope.size < 2:
        raise ValueError("envelope must have at least 2 frames")
    peak = envelope.max()
    if peak <= 0.0:
        return np.array([]), np.array([])
    env = envelope / peak
    period = estimate_period(envelope, bpm_range)

    n = env.size
    lo = max(1, int(round(period / 2)))
    hi = min(n - 1, int(round(period * 2)))
    score = env.copy()
    backlink = np.full(n, -1, dtype=np.int64)
    for t in range(lo, n):
        w_lo = max(0, t - hi)
        w_hi = t - lo + 1
        if w_hi <= w_lo:
            continue
        prev = np.arange(w_lo, w_hi)
        delta = t - prev
        penalty = _TIGHTNESS * np.log(delta / period) ** 2
        cand = score[prev] - penalty
        k = int(np.argmax(cand))
        if cand[k] > 0.0:
            score[t] = env[t] + cand[k]
            backlink[t] = prev[k]

    # choose the best terminal beat near the end, then backtrack
    tail_lo = max(0, n - int(round(period)))
    best_end = tail_lo + int(np.argmax(score[tail_lo:]))
    path = [best_end]
    while backlink[path[-1]] >= 0:
        path.append(backlink[path[-1]])
    frames = np.array(path[::-1], dtype=np.int64)
    # discard silent leading/trailing picks that carry no onset energy
    keep = env[frames] > 1e-6
    frames = frames[keep]
    times = frames * HOP_SECONDS + BEAT_TIME_OFFSET
    return times, envelope[frames]


def rhythm_stats(beat_times: np.ndarray, beat_strengths: np.ndarray,
                 clip_span: tuple[float, float]) -> RhythmStats:
    """Summarize beats falling inside [t0, t1)."""
    beat_times = np.asarray(beat_times, dtype=np.float64)
    beat_strengths = np.asarray(beat_strengths, dtype=np.float64)
    if beat_times.size > 1 and np.any(np.diff(beat_times) < 0):
        raise ValueError("beat_times must be sorted ascending")
    t0, t1 = clip_span
    mask = (beat_times >= t0) & (beat_times < t1)
    times = beat_times[mask]
    strengths = beat_strengths[mask]
    n = int(times.size)
    s = float(strengths.mean()) if n else 0.0
    l_bar = float(np.diff(times).mean()) if n >= 2 else None
    return RhythmStats(n, s, l_bar)
