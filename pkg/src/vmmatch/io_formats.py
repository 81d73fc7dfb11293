"""On-disk container formats: raw-frame video, mono PCM WAV, manifests."""

from __future__ import annotations

import json
import struct
import wave
from pathlib import Path

import numpy as np

VIDEO_MAGIC = b"UTVF"


class FormatError(ValueError):
    pass


def write_video(path, frames: np.ndarray):
    """Raw 8-bit grayscale frames: magic, u32 count/height/width (LE), data."""
    frames = np.asarray(frames, dtype=np.uint8)
    if frames.ndim != 3:
        raise FormatError("frames must be (n, h, w) uint8")
    n, h, w = frames.shape
    with open(path, "wb") as fh:
        fh.write(VIDEO_MAGIC)
        fh.write(struct.pack("<III", n, h, w))
        fh.write(frames.tobytes())


def read_video(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != VIDEO_MAGIC:
            raise FormatError(
                f"{path}: bad video magic {magic!r}, expected {VIDEO_MAGIC!r}")
        n, h, w = struct.unpack("<III", fh.read(12))
        data = fh.read(n * h * w)
    if len(data) != n * h * w:
        raise FormatError(f"{path}: truncated video payload")
    return np.frombuffer(data, dtype=np.uint8).reshape(n, h, w)


def write_wav(path, pcm: np.ndarray, sample_rate: int = 16000):
    pcm = np.asarray(pcm, dtype=np.int16)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


def read_wav(path, expect_rate: int = 16000) -> np.ndarray:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise FormatError(f"{path}: only mono WAV is supported")
        if fh.getsampwidth() != 2:
            raise FormatError(f"{path}: only 16-bit PCM WAV is supported")
        if fh.getframerate() != expect_rate:
            raise FormatError(
                f"{path}: sample rate {fh.getframerate()} != {expect_rate}; "
                "resampling is not supported")
        data = fh.readframes(fh.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.int16)


def read_manifest(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path) as fh:
        entries = json.load(fh)
    required = {"pair_id", "music_id", "video_path", "audio_path", "tags"}
    for i, entry in enumerate(entries):
        missing = required - entry.keys()
        if missing:
            raise FormatError(f"manifest entry {i} missing keys: {sorted(missing)}")
    return entries


def write_manifest(path, entries: list[dict]):
    with open(path, "w") as fh:
        json.dump(entries, fh, indent=1)
        fh.write("\n")
