"""Media-to-feature preprocessing: frames, clips, and filter-bank features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000
CLIP_SECONDS = 4
CLIP_SAMPLES = CLIP_SECONDS * SAMPLE_RATE
MAX_CLIPS = 7
FRAME_SIZE = 224
VIDEO_CLIP_SHAPE = (CLIP_SECONDS * FRAME_SIZE, FRAME_SIZE)  # 896 x 224

STFT_WIN = 400
STFT_HOP = 160
N_FFT = 512
N_MELS = 80
FMIN, FMAX = 0.0, 8000.0
LOG_FLOOR = 1e-10
MUSIC_CLIP_SHAPE = ((CLIP_SAMPLES - STFT_WIN) // STFT_HOP + 1, N_MELS)  # 398 x 80


@dataclass
class VideoClip:
    """Four stacked grayscale frames (896x224, values in [0,1])."""

    matrix: np.ndarray
    clip_index: int
    is_padded: bool
    frames: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.matrix.shape != VIDEO_CLIP_SHAPE:
            raise ValueError(f"video clip must be {VIDEO_CLIP_SHAPE}, got {self.matrix.shape}")
        if self.matrix.min() < 0.0 or self.matrix.max() > 1.0:
            raise ValueError("video clip values must lie in [0,1]")
        if self.frames is None:
            self.frames = self.matrix.reshape(CLIP_SECONDS, FRAME_SIZE, FRAME_SIZE)


@dataclass
class MusicClip:
    """Log-mel filter-bank features of one 4-second audio clip (398x80)."""

    matrix: np.ndarray
    clip_index: int
    is_padded: bool

    def __post_init__(self):
        if self.matrix.shape != MUSIC_CLIP_SHAPE:
            raise ValueError(f"music clip must be {MUSIC_CLIP_SHAPE}, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("music clip features must be finite")


def preprocess_video_frames(raw_frames) -> np.ndarray:
    """Grayscale + bilinear resize to 224x224, values scaled to [0,1]."""
    out = []
    for frame in raw_frames:
        frame = np.asarray(frame)
        if frame.size == 0:
            raise ValueError("empty video frame")
        if frame.ndim == 3:
            frame = (0.299 * frame[..., 0] + 0.587 * frame[..., 1]
                     + 0.114 * frame[..., 2])
        frame = _bilinear_resize(frame.astype(np.float64), FRAME_SIZE, FRAME_SIZE)
        out.append(np.clip(frame / 255.0, 0.0, 1.0))
    return np.stack(out)


def _bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear interpolation with half-pixel-centered sampling."""
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()

    def axis_coords(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    ylo, yhi, fy = axis_coords(in_h, out_h)
    xlo, xhi, fx = axis_coords(in_w, out_w)
    top = img[ylo][:, xlo] * (1 - fx) + img[ylo][:, xhi] * fx
    bot = img[yhi][:, xlo] * (1 - fx) + img[yhi][:, xhi] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def stft_log_mel(pcm: np.ndarray) -> np.ndarray:
    """Log-mel spectrogram of arbitrary-length PCM (float in [-1,1])."""
    pcm = np.asarray(pcm, dtype=np.float64)
    if pcm.size < STFT_WIN:
        pcm = np.pad(pcm, (0, STFT_WIN - pcm.size))
    n_frames = (pcm.size - STFT_WIN) // STFT_HOP + 1
    idx = np.arange(n_frames)[:, None] * STFT_HOP + np.arange(STFT_WIN)[None, :]
    frames = pcm[idx] * np.hanning(STFT_WIN)
    spec = np.abs(np.fft.rfft(frames, n=N_FFT, axis=1)) ** 2
    return np.log(spec @ mel_filterbank().T + LOG_FLOOR)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


_MEL_CACHE: dict[tuple, np.ndarray] = {}


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   sr: int = SAMPLE_RATE, fmin: float = FMIN,
                   fmax: float = FMAX) -> np.ndarray:
    """Triangular mel filters (n_mels, n_fft//2+1)."""
    key = (n_mels, n_fft, sr, fmin, fmax)
    if key not in _MEL_CACHE:
        edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
        bins = np.fft.rfftfreq(n_fft, d=1.0 / sr)
        fb = np.zeros((n_mels, bins.size))
        for i in range(n_mels):
            left, center, right = edges[i], edges[i + 1], edges[i + 2]
            up = (bins - left) / max(center - left, 1e-12)
            down = (right - bins) / max(right - center, 1e-12)
            fb[i] = np.maximum(0.0, np.minimum(up, down))
        _MEL_CACHE[key] = fb
    return _MEL_CACHE[key]


def fbank(clip_pcm: np.ndarray, clip_index: int = 0,
          is_padded: bool = False) -> MusicClip:
    """Log-mel features of exactly one zero-padded 4-second clip."""
    clip_pcm = np.asarray(clip_pcm, dtype=np.float64)
    if clip_pcm.shape != (CLIP_SAMPLES,):
        raise ValueError(f"fbank expects exactly {CLIP_SAMPLES} samples, got {clip_pcm.shape}")
    return MusicClip(stft_log_mel(clip_pcm), clip_index, is_padded)


def pcm_to_float(pcm: np.ndarray) -> np.ndarray:
    """int16 PCM -> float64 in [-1, 1); floats pass through."""
    pcm = np.asarray(pcm)
    if pcm.dtype == np.int16:
        return pcm.astype(np.float64) / 32768.0
    return pcm.astype(np.float64)


def chop_pair(pair) -> tuple[list[VideoClip], list[MusicClip], int]:
    """Chop a trimmed media pair into aligned 4-second clips.

    Final partial video clips repeat their last frame; final partial music
    clips are zero-padded before filter-bank extraction.
    """
    frames = preprocess_video_frames(pair.video)
    pcm = pcm_to_float(pair.music)
    seconds = frames.shape[0]
    if seconds == 0 or pcm.size == 0:
        raise ValueError("cannot chop empty media")
    n_clips = math.ceil(seconds / CLIP_SECONDS)
    if n_clips > MAX_CLIPS:
        raise ValueError(f"media longer than {MAX_CLIPS * CLIP_SECONDS}s after trimming")
    video_clips, music_clips = [], []
    for t in range(n_clips):
        chunk = frames[t * CLIP_SECONDS:(t + 1) * CLIP_SECONDS]
        padded = chunk.shape[0] < CLIP_SECONDS
        if padded:
            reps = np.repeat(chunk[-1:], CLIP_SECONDS - chunk.shape[0], axis=0)
            chunk = np.concatenate([chunk, reps], axis=0)
        video_clips.append(
            VideoClip(chunk.reshape(VIDEO_CLIP_SHAPE[0], FRAME_SIZE), t, padded,
                      frames=chunk))
        seg = pcm[t * CLIP_SAMPLES:(t + 1) * CLIP_SAMPLES]
        pad_audio = seg.size < CLIP_SAMPLES
        if pad_audio:
            seg = np.pad(seg, (0, CLIP_SAMPLES - seg.size))
        music_clips.append(fbank(seg, t, pad_audio))
    return video_clips, music_clips, n_clips
