import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmmatch.corpus import Corpus, MediaPair
from vmmatch.tagset import (
    TagCollection,
    TagError,
    assign_labels,
    build_tag_collections,
    corpus_tag_stats,
    export_tagset,
    load_tagset,
    tfidf,
)


def corpus_from_tags(tagging: dict[str, list[list[str]]]) -> Corpus:
    """tagging: music_id -> list of per-video tag lists."""
    pairs = []
    for mid, videos in tagging.items():
        for j, tags in enumerate(videos):
            video = np.zeros((1, 8, 8), dtype=np.uint8)
            music = np.zeros(16000, dtype=np.int16)
            pairs.append(MediaPair(f"{mid}_v{j}", video, music, list(tags), mid))
    return Corpus(pairs)


def oracle_labels(tagging: dict[str, list[list[str]]]) -> dict[str, str]:
    """Independent label assignment: plain counting, numpy log, explicit
    max over (score, reversed-lexicographic) keys."""
    pooled = {m: Counter(t for v in videos for t in v)
              for m, videos in tagging.items()}
    n_music = len(pooled)
    doc_freq = Counter()
    for counts in pooled.values():
        doc_freq.update(counts.keys())
    out = {}
    for mid, counts in pooled.items():
        total = sum(counts.values())
        scored = [(counts[t] / total * float(np.log(n_music / (doc_freq[t] + 1))), t)
                  for t in counts]
        best_score = max(s for s, _ in scored)
        # smallest tag among score ties (argmax with lexicographic tie-break)
        out[mid] = min(t for s, t in scored if s == best_score)
    return out


class TestScore:
    def test_hand_computed_value(self):
        # music A tagged {x, x, y}; corpus of 4 music; x appears in 1, y in 3
        cols = [
            TagCollection("A", Counter({"x": 2, "y": 1})),
            TagCollection("B", Counter({"y": 1})),
            TagCollection("C", Counter({"y": 2, "z": 1})),
            TagCollection("D", Counter({"z": 3})),
        ]
        stats = corpus_tag_stats(cols)
        assert tfidf(cols[0], stats, "x") == pytest.approx(
            (2 / 3) * math.log(4 / 2), abs=1e-15)
        assert tfidf(cols[0], stats, "y") == pytest.approx(
            (1 / 3) * math.log(4 / 4), abs=1e-15)

    def test_unknown_tag_rejected(self):
        cols = [TagCollection("A", Counter({"x": 1}))]
        stats = corpus_tag_stats(cols)
        with pytest.raises(TagError):
            tfidf(cols[0], stats, "nope")

    def test_ubiquitous_tag_scores_negative(self):
        # a tag present in every collection: idf = ln(N/(N+1)) < 0
        cols = [TagCollection(m, Counter({"common": 1})) for m in "ABC"]
        stats = corpus_tag_stats(cols)
        assert tfidf(cols[0], stats, "common") < 0


class TestAssign:
    def test_matches_oracle_on_fixed_corpus(self):
        tagging = {
            "m0": [["rock", "loud"], ["rock", "live"]],
            "m1": [["jazz", "loud"], ["jazz", "loud"]],
            "m2": [["loud"], ["live", "loud"]],
            "m3": [["rock", "jazz"], ["jazz"]],
        }
        ts = assign_labels(corpus_from_tags(tagging))
        assert ts.label_of_music == oracle_labels(tagging)

    def test_tie_breaks_lexicographic(self):
        # both tags have identical counts and doc freq -> same score
        tagging = {"m0": [["b", "a"]], "m1": [["c", "d"]]}
        ts = assign_labels(corpus_from_tags(tagging))
        assert ts.label_of_music["m0"] == "a"
        assert ts.label_of_music["m1"] == "c"

    def test_count_scale_invariance(self):
        # repeating every video the same number of times keeps tf and
        # doc freq unchanged, so labels must not move
        tagging = {"m0": [["x", "y"], ["x"]], "m1": [["y", "z"]],
                   "m2": [["z"], ["z", "x"]]}
        scaled = {m: v * 3 for m, v in tagging.items()}
        a = assign_labels(corpus_from_tags(tagging))
        b = assign_labels(corpus_from_tags(scaled))
        assert a.label_of_music == b.label_of_music

    def test_vocab_sorted_and_indexed(self):
        tagging = {"m0": [["zz"]], "m1": [["aa"]], "m2": [["mm"]]}
        ts = assign_labels(corpus_from_tags(tagging))
        assert ts.vocab == sorted(ts.vocab)
        for i, t in enumerate(ts.vocab):
            assert ts.label_index[t] == i
        assert ts.label_id("m1") == ts.label_index["aa"]

    @settings(max_examples=60, deadline=None)
    @given(st.dictionaries(
        st.sampled_from([f"m{i}" for i in range(6)]),
        st.lists(st.lists(st.sampled_from(list("abcdef")), min_size=1,
                          max_size=4), min_size=1, max_size=3),
        min_size=2, max_size=6))
    def test_matches_oracle_property(self, tagging):
        ts = assign_labels(corpus_from_tags(tagging))
        assert ts.label_of_music == oracle_labels(tagging)


class TestExport:
    def test_round_trip(self, tmp_path):
        tagging = {"m0": [["x", "y"]], "m1": [["y"]], "m2": [["z", "z"]]}
        ts = assign_labels(corpus_from_tags(tagging))
        path = tmp_path / "tagset.json"
        export_tagset(ts, path)
        loaded = load_tagset(path)
        assert loaded.vocab == ts.vocab
        assert loaded.label_of_music == ts.label_of_music
        assert loaded.label_index == ts.label_index

    def test_export_groups_music_ids(self, tmp_path):
        tagging = {"m0": [["x"]], "m1": [["x"]], "m2": [["y"]]}
        ts = assign_labels(corpus_from_tags(tagging))
        path = tmp_path / "tagset.json"
        export_tagset(ts, path)
        rows = json.loads(path.read_text())
        by_tag = {r["tag"]: r["music_ids"] for r in rows}
        assert by_tag["x"] == ["m0", "m1"]
        assert by_tag["y"] == ["m2"]


def test_collections_in_sorted_music_order():
    tagging = {"zz": [["a"]], "aa": [["b"]], "mm": [["c"]]}
    cols = build_tag_collections(corpus_from_tags(tagging))
    assert [c.music_id for c in cols] == ["aa", "mm", "zz"]
