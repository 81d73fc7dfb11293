"""Music index construction, ranking, and Recall@K evaluation.

The default ranking mode projects with the attention input zeroed and ranks
against fixed candidate projections; it tracks the geometry the training
triplets shape. A "paired" mode instead recomputes cross-attention for every
query-candidate combination; it is much slower and the attention computed
for combinations never seen in training tends not to preserve the trained
ordering, so it is opt-in.
Distances are Euclidean; ties break by candidate order (sorted music_id).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import PairFeatures, batch_features
from .models import Matcher
from .nn import Tensor, no_grad
from .quantize import BinSpec


class EvalError(ValueError):
    pass


@dataclass
class MusicIndex:
    music_ids: list[str]          # sorted, one entry per distinct test music
    theta: np.ndarray             # (P, 256) fast-mode projections (att = 0)
    xi: np.ndarray                # (P, 768) encoder embeddings for paired mode
    metric: str = "euclidean"

    def __post_init__(self):
        if len(self.music_ids) != self.theta.shape[0]:
            raise EvalError("index rows must match music ids")
        if not np.all(np.isfinite(self.theta)):
            raise EvalError("index rows must be finite")

    @property
    def pool_size(self) -> int:
        return len(self.music_ids)


@dataclass
class RetrievalReport:
    k_values: list[int]
    recalls: dict[int, float]     # percent, keyed by K
    pool_size: int
    n_queries: int
    config: dict = field(default_factory=dict)
    per_query: list[list[str]] | None = None

    def validate(self):
        ordered = [self.recalls[k] for k in sorted(self.recalls)]
        if any(b < a - 1e-9 for a, b in zip(ordered, ordered[1:])):
            raise EvalError("recall must be nondecreasing in K")
        if any(not (0.0 <= v <= 100.0) for v in ordered):
            raise EvalError("recall must lie in [0, 100]")

    def table(self) -> str:
        header = " | ".join(f"K = {k}" for k in self.k_values)
        values = " | ".join(f"{self.recalls[k]:5.2f}" for k in self.k_values)
        return (f"Recall@K (%) over {self.n_queries} queries, pool {self.pool_size}\n"
                f"{header}\n{values}")


def encode_pairs(matcher: Matcher, feats: list[PairFeatures], mode: str,
                 binspec: BinSpec) -> tuple[np.ndarray, np.ndarray]:
    """Pooled sequence embeddings (xi_v, xi_m) for a list of pairs."""
    batch = batch_features(feats, binspec)
    with no_grad():
        xi_v = matcher.encode_sequence(batch["f_v"], batch["mask"], "video",
                                       mode, flow_bins=batch["flow_bins"],
                                       track_embedding=batch["ae_v"])
        xi_m = matcher.encode_sequence(batch["f_m"], batch["mask"], "music",
                                       mode, rhythm_bins=batch["rhythm_bins"],
                                       track_embedding=batch["ae_m"])
    return xi_v.data, xi_m.data


def build_index(matcher: Matcher, test_feats: list[PairFeatures], mode: str,
                binspec: BinSpec) -> MusicIndex:
    """Index over all distinct test music (first pair per track carries the
    music media, which is identical across that track's pairs)."""
    if not test_feats:
        raise EvalError("empty test set")
    first_by_music: dict[str, PairFeatures] = {}
    for f in test_feats:
        first_by_music.setdefault(f.music_id, f)
    music_ids = sorted(first_by_music)
    reps = [first_by_music[m] for m in music_ids]
    _, xi_m = encode_pairs(matcher, reps, mode, binspec)
    with no_grad():
        zero = Tensor(np.zeros_like(xi_m))
        theta = matcher.project(Tensor(xi_m), zero, "music").data
    return MusicIndex(music_ids, theta, xi_m)


def _pair_distances(matcher: Matcher, xi_v: np.ndarray,
                    index: MusicIndex) -> np.ndarray:
    """Distances of one video query against every candidate, recomputing
    cross-attention per query-candidate combination."""
    p = index.pool_size
    with no_grad():
        qv = Tensor(np.tile(xi_v, (p, 1)))
        cm = Tensor(index.xi)
        att_v, att_m = matcher.cross_attention(qv, cm)
        th_v = matcher.project(qv, att_v, "video").data
        th_m = matcher.project(cm, att_m, "music").data
    return np.sqrt(((th_v - th_m) ** 2).sum(axis=1))


def _fast_distances(matcher: Matcher, xi_v: np.ndarray,
                    index: MusicIndex) -> np.ndarray:
    with no_grad():
        qv = Tensor(xi_v[None, :])
        th_v = matcher.project(qv, Tensor(np.zeros_like(qv.data)), "video").data[0]
    return np.sqrt(((index.theta - th_v) ** 2).sum(axis=1))


def query(matcher: Matcher, xi_v: np.ndarray, index: MusicIndex, k: int,
          paired_attention: bool = False) -> list[str]:
    """Top-k candidate music_ids by ascending distance."""
    if k > index.pool_size:
        raise EvalError(f"K={k} exceeds pool size {index.pool_size}")
    if paired_attention:
        dist = _pair_distances(matcher, xi_v, index)
    else:
        dist = _fast_distances(matcher, xi_v, index)
    order = np.argsort(dist, kind="stable")  # ties fall back to music_id order
    return [index.music_ids[i] for i in order[:k]]


def rank_by_distance(distances: np.ndarray, ids: list[str]) -> list[str]:
    """Brute-force full ranking used as the sort oracle surface."""
    order = np.argsort(np.asarray(distances), kind="stable")
    return [ids[i] for i in order]


def recall_at_k(ranked_lists: list[list[str]], truths: list[str],
                k_values: list[int], pool_size: int,
                config: dict | None = None) -> RetrievalReport:
    """Percent of queries whose true music appears in the top min(K, pool)."""
    if len(ranked_lists) != len(truths):
        raise EvalError("one ground truth per ranked list required")
    for i, (ranked, truth) in enumerate(zip(ranked_lists, truths)):
        if truth not in ranked:
            raise EvalError(f"query {i}: ground truth {truth!r} not in pool")
    recalls = {}
    for k in k_values:
        k_eff = min(k, pool_size)
        hits = sum(truth in ranked[:k_eff]
                   for ranked, truth in zip(ranked_lists, truths))
        recalls[k] = 100.0 * hits / max(len(truths), 1)
    report = RetrievalReport(list(k_values), recalls, pool_size,
                             len(truths), config or {})
    report.validate()
    return report


def evaluate(matcher: Matcher, test_feats: list[PairFeatures], mode: str,
             binspec: BinSpec, k_values=(1, 5, 10, 25),
             paired_attention: bool = False,
             keep_rankings: bool = False) -> RetrievalReport:
    """Recall@K of video queries against the distinct-music candidate pool."""
    index = build_index(matcher, test_feats, mode, binspec)
    xi_v, _ = encode_pairs(matcher, test_feats, mode, binspec)
    ranked_lists = [query(matcher, xi_v[i], index, index.pool_size,
                          paired_attention)
                    for i in range(len(test_feats))]
    truths = [f.music_id for f in test_feats]
    report = recall_at_k(ranked_lists, truths, list(k_values),
                         index.pool_size,
                         {"mode": mode, "paired_attention": paired_attention})
    if keep_rankings:
        report.per_query = ranked_lists
    return report
