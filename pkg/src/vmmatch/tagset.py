"""Unified label assignment: TF-IDF over per-music pooled video tags.

Each music track pools the (non-deduplicated) tags of all its paired
videos. A tag's score is (M_j / M) * ln(N / (N_j + 1)), where M is the
collection size, M_j the tag's multiplicity, N the number of music tracks
and N_j the number of tracks whose collection contains the tag. The
highest-scoring tag becomes the track's label; videos inherit their paired
track's label. Ties break to the lexicographically smallest tag.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Corpus


class TagError(ValueError):
    pass


@dataclass
class TagCollection:
    music_id: str
    tags: Counter

    def __post_init__(self):
        if not self.tags:
            raise TagError(f"{self.music_id}: empty tag collection")

    @property
    def total(self) -> int:
        return sum(self.tags.values())


@dataclass
class CorpusTagStats:
    n_music: int
    doc_freq: dict[str, int]


@dataclass
class UnifiedTagSet:
    vocab: list[str]
    label_of_music: dict[str, str]
    label_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.label_index:
            self.label_index = {t: i for i, t in enumerate(self.vocab)}

    @property
    def size(self) -> int:
        return len(self.vocab)

    def label_id(self, music_id: str) -> int:
        return self.label_index[self.label_of_music[music_id]]


def build_tag_collections(corpus: Corpus) -> list[TagCollection]:
    """One multiset of video tags per music track, in sorted music order."""
    pooled: dict[str, Counter] = {}
    for pair in corpus.pairs:
        pooled.setdefault(pair.music_id, Counter()).update(pair.tags)
    return [TagCollection(mid, pooled[mid]) for mid in sorted(pooled)]


def corpus_tag_stats(collections: list[TagCollection]) -> CorpusTagStats:
    doc_freq: Counter = Counter()
    for col in collections:
        doc_freq.update(set(col.tags))
    return CorpusTagStats(len(collections), dict(doc_freq))


def tfidf(tagcol: TagCollection, stats: CorpusTagStats, tag: str) -> float:
    """TF-IDF of one tag in one collection; may be negative (N_j + 1 > N)."""
    if tag not in tagcol.tags:
        raise TagError(f"tag {tag!r} not in collection for {tagcol.music_id}")
    tf = tagcol.tags[tag] / tagcol.total
    idf = math.log(stats.n_music / (stats.doc_freq[tag] + 1))
    return tf * idf


def assign_labels(corpus: Corpus) -> UnifiedTagSet:
    """Per-music argmax TF-IDF label; deterministic lexicographic tie-break."""
    collections = build_tag_collections(corpus)
    stats = corpus_tag_stats(collections)
    label_of_music: dict[str, str] = {}
    for col in collections:
        best_tag, best_score = None, None
        for tag in sorted(col.tags):
            score = tfidf(col, stats, tag)
            if best_score is None or score > best_score:
                best_tag, best_score = tag, score
        label_of_music[col.music_id] = best_tag
    vocab = sorted(set(label_of_music.values()))
    return UnifiedTagSet(vocab, label_of_music)


def export_tagset(tagset: UnifiedTagSet, path):
    """Structured dump: per label its id and the music tracks carrying it."""
    rows = []
    for tag in tagset.vocab:
        music_ids = sorted(m for m, lab in tagset.label_of_music.items() if lab == tag)
        rows.append({"tag": tag, "id": tagset.label_index[tag], "music_ids": music_ids})
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")


def load_tagset(path) -> UnifiedTagSet:
    with open(path) as fh:
        rows = json.load(fh)
    vocab = [r["tag"] for r in sorted(rows, key=lambda r: r["id"])]
    label_of_music = {m: r["tag"] for r in rows for m in r["music_ids"]}
    return UnifiedTagSet(vocab, label_of_music)
