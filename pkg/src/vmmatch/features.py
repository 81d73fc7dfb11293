"""Per-pair feature assembly: clips, rhythm/flow statistics, and clip-level
embeddings from frozen extractors.

Clip matrices are kept in compact form (uint8 frames, float32 filter banks)
and promoted to float64 tensors only inside model forwards. Beat tracking
runs once over the full track and beats are bucketed into 4-second clip
spans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, MediaPair
from .models import ClipExtractor
from .nn import Tensor
from .quantize import BinSpec, discretize_flow, discretize_rhythm
from .signal import (
    CLIP_SECONDS,
    FlowStat,
    RhythmStats,
    chop_pair,
    onset_envelope,
    optical_flow_stat,
    pcm_to_float,
    rhythm_stats,
    track_beats,
)


@dataclass
class PairClips:
    """Preprocessed clips plus per-clip signal statistics for one pair."""

    pair_id: str
    music_id: str
    tags: list[str]
    n_clips: int
    video_matrices: np.ndarray   # (T, 896, 224) float32 in [0,1]
    music_matrices: np.ndarray   # (T, 398, 80) float32
    rhythm: list[RhythmStats]
    flows: list[FlowStat]


@dataclass
class PairFeatures:
    """Model-ready features for one pair."""

    pair_id: str
    music_id: str
    tag: str
    label_id: int
    f_v: np.ndarray              # (T, 512)
    f_m: np.ndarray              # (T, 512)
    ae_v: np.ndarray             # (512,) track-level external embedding
    ae_m: np.ndarray             # (512,)
    rhythm: list[RhythmStats]
    flows: list[FlowStat]

    @property
    def n_clips(self) -> int:
        return self.f_v.shape[0]

    def rhythm_bins(self, spec: BinSpec) -> np.ndarray:
        return np.array([discretize_rhythm(r, spec) for r in self.rhythm],
                        dtype=np.int64)

    def flow_bins(self, spec: BinSpec) -> np.ndarray:
        return np.array([discretize_flow(f, spec) for f in self.flows],
                        dtype=np.int64)


def compute_pair_clips(pair: MediaPair) -> PairClips:
    video_clips, music_clips, n_clips = chop_pair(pair)
    pcm = pcm_to_float(pair.music)
    times, strengths = track_beats(onset_envelope(pcm))
    rhythm = [rhythm_stats(times, strengths,
                           (t * CLIP_SECONDS, (t + 1) * CLIP_SECONDS))
              for t in range(n_clips)]
    flows = [optical_flow_stat(vc.frames) for vc in video_clips]
    return PairClips(
        pair.pair_id, pair.music_id, list(pair.tags), n_clips,
        np.stack([vc.matrix for vc in video_clips]).astype(np.float32),
        np.stack([mc.matrix for mc in music_clips]).astype(np.float32),
        rhythm, flows)


def compute_corpus_clips(corpus: Corpus) -> list[PairClips]:
    return [compute_pair_clips(p) for p in corpus.pairs]


def _embed_clips(extractor: ClipExtractor, matrices: np.ndarray) -> np.ndarray:
    return extractor.embed(Tensor(matrices.astype(np.float64))).data


def compute_pair_features(clips: PairClips, tagset,
                          video_extractor: ClipExtractor,
                          music_extractor: ClipExtractor,
                          ae_video_extractor: ClipExtractor,
                          ae_music_extractor: ClipExtractor) -> PairFeatures:
    """Embeddings from the pretrained extractors, plus track-level external
    embeddings (mean clip feature of the generic, untrained extractors) used
    by the AE evaluation mode."""
    f_v = _embed_clips(video_extractor, clips.video_matrices)
    f_m = _embed_clips(music_extractor, clips.music_matrices)
    ae_v = _embed_clips(ae_video_extractor, clips.video_matrices).mean(axis=0)
    ae_m = _embed_clips(ae_music_extractor, clips.music_matrices).mean(axis=0)
    tag = tagset.label_of_music[clips.music_id]
    return PairFeatures(clips.pair_id, clips.music_id, tag,
                        tagset.label_index[tag], f_v, f_m, ae_v, ae_m,
                        clips.rhythm, clips.flows)


def batch_features(feats: list[PairFeatures], binspec: BinSpec
                   ) -> dict[str, np.ndarray]:
    """Pad a list of per-pair features to a common clip count.

    Returns arrays keyed f_v, f_m, mask, rhythm_bins, flow_bins, ae_v, ae_m
    plus label ids; padded slots carry zeros / bin 0 and mask False.
    """
    b = len(feats)
    t_max = max(f.n_clips for f in feats)
    out = {
        "f_v": np.zeros((b, t_max, feats[0].f_v.shape[1])),
        "f_m": np.zeros((b, t_max, feats[0].f_m.shape[1])),
        "mask": np.zeros((b, t_max), dtype=bool),
        "rhythm_bins": np.zeros((b, t_max, 3), dtype=np.int64),
        "flow_bins": np.zeros((b, t_max), dtype=np.int64),
        "ae_v": np.stack([f.ae_v for f in feats]),
        "ae_m": np.stack([f.ae_m for f in feats]),
        "label_ids": np.array([f.label_id for f in feats], dtype=np.int64),
    }
    for i, f in enumerate(feats):
        t = f.n_clips
        out["f_v"][i, :t] = f.f_v
        out["f_m"][i, :t] = f.f_m
        out["mask"][i, :t] = True
        out["rhythm_bins"][i, :t] = f.rhythm_bins(binspec)
        out["flow_bins"][i, :t] = f.flow_bins(binspec)
    return out
