"""Video-music pair corpora: loading, synthesis, and music-level splits.

Synthetic corpora are built from controllable primitives: music tracks are
click trains (per-track tempo) over a group-specific tonal bed, videos are a
horizontally scrolling textured band over a group-specific grating
background. With the rhythm-correlation flag on, the band's scroll speed is
a monotone function of the paired track's tempo, so rhythm and optical-flow
statistics carry a planted retrieval signal that simple content features do
not expose directly.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io_formats import read_manifest, read_video, read_wav, write_manifest, \
    write_video, write_wav

SAMPLE_RATE = 16000
MAX_SECONDS = 28
FRAME_SIZE = 224


class ValidationError(ValueError):
    pass


class LoadError(IOError):
    pass


@dataclass
class MediaPair:
    pair_id: str
    video: np.ndarray      # (seconds, h, w) uint8 grayscale, 1 fps
    music: np.ndarray      # int16 PCM at 16 kHz
    tags: list[str]
    music_id: str

    def validate(self):
        if self.video.shape[0] < 1:
            raise ValidationError(f"{self.pair_id}: video has no frames")
        if self.music.size < 1:
            raise ValidationError(f"{self.pair_id}: music has no samples")
        if not self.tags:
            raise ValidationError(f"{self.pair_id}: empty tag list")
        v_sec = self.video.shape[0]
        m_sec = self.music.size / SAMPLE_RATE
        if v_sec != m_sec or v_sec > MAX_SECONDS:
            raise ValidationError(
                f"{self.pair_id}: untrimmed media ({v_sec}s video, {m_sec}s music)")

    def seconds(self) -> int:
        return self.video.shape[0]


@dataclass
class Corpus:
    pairs: list[MediaPair]
    music_index: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.music_index:
            for p in self.pairs:
                self.music_index.setdefault(p.music_id, []).append(p.pair_id)
        ids = [p.pair_id for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate pair_id in corpus")

    @property
    def n_music(self) -> int:
        return len(self.music_index)

    def by_music(self, music_id: str) -> list[MediaPair]:
        wanted = set(self.music_index[music_id])
        return [p for p in self.pairs if p.pair_id in wanted]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for p in self.pairs:
            h.update(p.pair_id.encode())
            h.update(p.music_id.encode())
            h.update(",".join(p.tags).encode())
            h.update(p.video.tobytes())
            h.update(p.music.tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    train: float
    val: float
    test: float
    seed: int = 0

    def __post_init__(self):
        for r in (self.train, self.val, self.test):
            if not (0.0 <= r <= 1.0):
                raise ValidationError(f"split ratio {r} outside [0,1]")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise ValidationError("split ratios must sum to 1")


@dataclass(frozen=True)
class SynthSpec:
    n_music: int
    videos_per_music: int
    tag_vocab: int = 32
    sec_min: int = 8
    sec_max: int = 16
    rhythm_correlated: bool = True
    label_groups: int = 4
    tempo_range: tuple[float, float] = (60.0, 150.0)
    amplitude_patterns: bool = True
    balanced_amplitude: bool = False  # same gain multiset for every track,
                                      # so only the clip order distinguishes

    def __post_init__(self):
        if self.n_music < 1 or self.videos_per_music < 1 or self.tag_vocab < 1:
            raise ValidationError("synth spec counts must be >= 1")
        if not (1 <= self.sec_min <= self.sec_max <= MAX_SECONDS):
            raise ValidationError("invalid clip length distribution")
        if self.label_groups < 1:
            raise ValidationError("label_groups must be >= 1")


def _trim(video: np.ndarray, music: np.ndarray, pair_id: str) -> tuple[np.ndarray, np.ndarray]:
    v_sec = int(video.shape[0])
    m_sec = int(music.size // SAMPLE_RATE)
    sec = min(v_sec, m_sec, MAX_SECONDS)
    if sec < 1:
        raise ValidationError(f"{pair_id}: media shorter than 1 second")
    return video[:sec], music[: sec * SAMPLE_RATE]


def load_corpus(root_path, manifest) -> Corpus:
    """Load pairs listed in a manifest; trims both streams to <= 28 s."""
    root = Path(root_path)
    pairs = []
    for entry in read_manifest(manifest):
        video_path = root / entry["video_path"]
        audio_path = root / entry["audio_path"]
        for p in (video_path, audio_path):
            if not p.exists():
                raise LoadError(f"media file not found: {p}")
        video = read_video(video_path)
        music = read_wav(audio_path)
        if video.shape[0] < 1 or music.size < 1:
            raise ValidationError(f"{entry['pair_id']}: zero-length media")
        if not entry["tags"]:
            raise ValidationError(f"{entry['pair_id']}: empty tag list")
        video, music = _trim(video, music, entry["pair_id"])
        pair = MediaPair(entry["pair_id"], video, music,
                         list(entry["tags"]), entry["music_id"])
        pair.validate()
        pairs.append(pair)
    return Corpus(pairs)


def save_corpus(corpus: Corpus, root_path) -> Path:
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for p in corpus.pairs:
        vpath, apath = f"{p.pair_id}.utvf", f"{p.pair_id}.wav"
        write_video(root / vpath, p.video)
        write_wav(root / apath, p.music)
        entries.append({"pair_id": p.pair_id, "music_id": p.music_id,
                        "video_path": vpath, "audio_path": apath,
                        "tags": p.tags})
    manifest = root / "manifest.json"
    write_manifest(manifest, entries)
    return manifest


# -- synthesis ---------------------------------------------------------------

_GROUP_TONES = [220.0, 330.0, 440.0, 660.0, 880.0, 1320.0, 1760.0, 2640.0]


def tempo_to_speed(tempo: float, tempo_range=(60.0, 150.0)) -> float:
    """Monotone map from track tempo (BPM) to band scroll speed (px/frame)."""
    lo, hi = tempo_range
    return 1.0 + 6.0 * (tempo - lo) / max(hi - lo, 1e-9)


def synth_click_track(seconds: int, tempo: float, rng: np.random.Generator,
                      tone_hz: float = 440.0,
                      clip_gains: np.ndarray | None = None) -> np.ndarray:
    """Click train at `tempo` BPM over a quiet tonal bed, int16 PCM."""
    n = seconds * SAMPLE_RATE
    t = np.arange(n) / SAMPLE_RATE
    audio = 0.12 * np.sin(2 * np.pi * tone_hz * t)
    period = 60.0 / tempo
    burst_len = 128
    burst = (rng.standard_normal(burst_len)
             * np.exp(-np.arange(burst_len) / 24.0) * 0.75)
    k = 0
    while k * period < seconds:
        start = int(round(k * period * SAMPLE_RATE))
        stop = min(start + burst_len, n)
        audio[start:stop] += burst[: stop - start]
        k += 1
    if clip_gains is not None:
        for ci, g in enumerate(clip_gains):
            audio[ci * 4 * SAMPLE_RATE:(ci + 1) * 4 * SAMPLE_RATE] *= g
    return np.clip(audio * 32767.0, -32768, 32767).astype(np.int16)


def synth_video(seconds: int, speed: float, rng: np.random.Generator,
                grating_freq: float = 4.0,
                clip_gains: np.ndarray | None = None) -> np.ndarray:
    """Scrolling textured band over a static grating background, uint8."""
    h = w = FRAME_SIZE
    x = np.arange(w)
    background = 90.0 + 50.0 * np.sin(2 * np.pi * grating_freq * x / w)
    background = np.tile(background, (h, 1))
    background += rng.normal(0.0, 6.0, size=(h, w))
    band = rng.integers(20, 236, size=(64, w)).astype(np.float64)
    y0 = 80
    frames = np.empty((seconds, h, w), dtype=np.uint8)
    for k in range(seconds):
        frame = background.copy()
        shift = int(round(speed * k))
        frame[y0:y0 + 64] = np.roll(band, shift, axis=1)
        gain = 1.0
        if clip_gains is not None:
            gain = clip_gains[k // 4]
        frames[k] = np.clip(frame * gain, 0, 255).astype(np.uint8)
    return frames


def synth_corpus(spec: SynthSpec, seed: int) -> Corpus:
    """Deterministic synthetic corpus; all randomness derives from `seed`."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    pairs = []
    lo, hi = spec.tempo_range
    noise_tags = [f"tag{i:03d}" for i in range(spec.tag_vocab)]
    max_clips = int(-(-spec.sec_max // 4))
    for i in range(spec.n_music):
        music_id = f"music{i:03d}"
        group = i % spec.label_groups
        group_tag = f"genre{group:02d}"
        tone = _GROUP_TONES[group % len(_GROUP_TONES)]
        tempo = float(rng.uniform(lo, hi))
        seconds = int(rng.integers(spec.sec_min, spec.sec_max + 1))
        if spec.balanced_amplitude:
            base = np.tile([0.45, 1.0], -(-max_clips // 2))[:max_clips]
            gains = rng.permutation(base)
        elif spec.amplitude_patterns:
            gains = rng.choice([0.45, 1.0], size=max_clips)
        else:
            gains = None
        music = synth_click_track(seconds, tempo, rng, tone_hz=tone,
                                  clip_gains=gains)
        if spec.rhythm_correlated:
            speed = tempo_to_speed(tempo, spec.tempo_range)
        else:
            speed = float(rng.uniform(1.0, 7.0))
        for j in range(spec.videos_per_music):
            video = synth_video(seconds, speed, rng,
                                grating_freq=2.0 * (group + 1),
                                clip_gains=gains)
            tags = [group_tag, group_tag, str(rng.choice(noise_tags))]
            pairs.append(MediaPair(f"m{i:03d}_v{j}", video, music.copy(),
                                   tags, music_id))
    for p in pairs:
        p.validate()
    return Corpus(pairs)


def split_corpus(corpus: Corpus, spec: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Partition by music_id so no track straddles splits."""
    music_ids = sorted(corpus.music_index)
    if len(music_ids) < 3:
        raise ValidationError("need at least 3 distinct music tracks to split")
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x51117]))
    order = [music_ids[i] for i in rng.permutation(len(music_ids))]
    n = len(order)
    ratios = np.array([spec.train, spec.val, spec.test])
    counts = np.floor(ratios * n).astype(int)
    rema = ratios * n - counts
    while counts.sum() < n:
        k = int(np.argmax(rema))
        counts[k] += 1
        rema[k] = -1
    cut1, cut2 = counts[0], counts[0] + counts[1]
    buckets = {m: 0 for m in order[:cut1]}
    buckets.update({m: 1 for m in order[cut1:cut2]})
    buckets.update({m: 2 for m in order[cut2:]})
    split_pairs: list[list[MediaPair]] = [[], [], []]
    for p in corpus.pairs:
        split_pairs[buckets[p.music_id]].append(p)
    return tuple(Corpus(ps) for ps in split_pairs)
