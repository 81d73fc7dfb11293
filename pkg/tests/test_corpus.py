import numpy as np
import pytest

from vmmatch.corpus import (
    Corpus,
    LoadError,
    MediaPair,
    SplitSpec,
    SynthSpec,
    ValidationError,
    load_corpus,
    save_corpus,
    split_corpus,
    synth_corpus,
    tempo_to_speed,
)


def make_pair(pair_id="p0", seconds=4, music_id="m0", tags=("a",)):
    video = np.full((seconds, 224, 224), 128, dtype=np.uint8)
    music = np.zeros(seconds * 16000, dtype=np.int16)
    return MediaPair(pair_id, video, music, list(tags), music_id)


class TestMediaPair:
    def test_valid_pair_passes(self):
        make_pair().validate()

    def test_empty_tags_rejected(self):
        with pytest.raises(ValidationError):
            make_pair(tags=()).validate()

    def test_length_mismatch_rejected(self):
        p = make_pair()
        p.music = np.zeros(5 * 16000, dtype=np.int16)
        with pytest.raises(ValidationError):
            p.validate()

    def test_over_28s_rejected(self):
        with pytest.raises(ValidationError):
            make_pair(seconds=29).validate()


class TestCorpus:
    def test_duplicate_pair_id_rejected(self):
        with pytest.raises(ValidationError):
            Corpus([make_pair("x"), make_pair("x", music_id="m1")])

    def test_music_index(self):
        c = Corpus([make_pair("a", music_id="m0"),
                    make_pair("b", music_id="m0"),
                    make_pair("c", music_id="m1")])
        assert c.n_music == 2
        assert [p.pair_id for p in c.by_music("m0")] == ["a", "b"]

    def test_content_hash_changes_with_content(self):
        c1 = Corpus([make_pair()])
        c2 = Corpus([make_pair()])
        assert c1.content_hash() == c2.content_hash()
        c2.pairs[0].video[0, 0, 0] += 1
        assert c1.content_hash() != c2.content_hash()


class TestSynth:
    def test_deterministic(self):
        spec = SynthSpec(n_music=4, videos_per_music=2, sec_min=8, sec_max=10)
        a = synth_corpus(spec, seed=7)
        b = synth_corpus(spec, seed=7)
        assert a.content_hash() == b.content_hash()
        c = synth_corpus(spec, seed=8)
        assert a.content_hash() != c.content_hash()

    def test_shape_and_ranges(self):
        spec = SynthSpec(n_music=3, videos_per_music=2, sec_min=8, sec_max=12)
        corpus = synth_corpus(spec, seed=0)
        assert len(corpus.pairs) == 6
        for p in corpus.pairs:
            p.validate()
            assert p.video.dtype == np.uint8
            assert p.video.shape[1:] == (224, 224)
            assert p.music.dtype == np.int16
            assert 8 <= p.seconds() <= 12

    def test_group_tag_repeated_per_video(self):
        spec = SynthSpec(n_music=4, videos_per_music=1, label_groups=2)
        corpus = synth_corpus(spec, seed=0)
        for p in corpus.pairs:
            assert p.tags[0] == p.tags[1]
            assert p.tags[0].startswith("genre")

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValidationError):
            SynthSpec(n_music=0, videos_per_music=1)
        with pytest.raises(ValidationError):
            SynthSpec(n_music=1, videos_per_music=1, sec_min=5, sec_max=40)

    def test_tempo_to_speed_monotone(self):
        tempos = [60, 82.5, 105, 127.5, 150]
        speeds = [tempo_to_speed(t, (60.0, 150.0)) for t in tempos]
        assert all(b > a for a, b in zip(speeds, speeds[1:]))


class TestRoundTrip:
    def test_save_load_identical(self, tmp_path):
        spec = SynthSpec(n_music=3, videos_per_music=2, sec_min=8, sec_max=9)
        corpus = synth_corpus(spec, seed=1)
        manifest = save_corpus(corpus, tmp_path)
        loaded = load_corpus(tmp_path, manifest)
        assert loaded.content_hash() == corpus.content_hash()

    def test_missing_file_names_path(self, tmp_path):
        spec = SynthSpec(n_music=2, videos_per_music=1, sec_min=8, sec_max=8)
        corpus = synth_corpus(spec, seed=1)
        manifest = save_corpus(corpus, tmp_path)
        victim = next(tmp_path.glob("*.utvf"))
        victim.unlink()
        with pytest.raises(LoadError, match=victim.name):
            load_corpus(tmp_path, manifest)

    def test_long_media_trimmed_on_load(self, tmp_path):
        # write an over-length pair directly, bypassing validation
        from vmmatch.io_formats import write_manifest, write_video, write_wav
        video = np.zeros((30, 224, 224), dtype=np.uint8)
        music = np.zeros(30 * 16000, dtype=np.int16)
        write_video(tmp_path / "p.utvf", video)
        write_wav(tmp_path / "p.wav", music)
        write_manifest(tmp_path / "manifest.json", [{
            "pair_id": "p", "music_id": "m", "video_path": "p.utvf",
            "audio_path": "p.wav", "tags": ["t"]}])
        corpus = load_corpus(tmp_path, tmp_path / "manifest.json")
        assert corpus.pairs[0].seconds() == 28
        assert corpus.pairs[0].music.size == 28 * 16000


class TestSplit:
    def test_partitions_by_music(self):
        spec = SynthSpec(n_music=10, videos_per_music=2, sec_min=8, sec_max=9)
        corpus = synth_corpus(spec, seed=2)
        tr, va, te = split_corpus(corpus, SplitSpec(0.6, 0.2, 0.2, seed=0))
        all_music = set(corpus.music_index)
        parts = [set(tr.music_index), set(va.music_index), set(te.music_index)]
        assert parts[0] | parts[1] | parts[2] == all_music
        assert not (parts[0] & parts[1] or parts[0] & parts[2]
                    or parts[1] & parts[2])
        assert len(tr.pairs) + len(va.pairs) + len(te.pairs) == len(corpus.pairs)

    def test_split_deterministic(self):
        spec = SynthSpec(n_music=6, videos_per_music=1, sec_min=8, sec_max=9)
        corpus = synth_corpus(spec, seed=3)
        s = SplitSpec(0.5, 0.25, 0.25, seed=4)
        a = split_corpus(corpus, s)
        b = split_corpus(corpus, s)
        for x, y in zip(a, b):
            assert [p.pair_id for p in x.pairs] == [p.pair_id for p in y.pairs]

    def test_bad_ratios_rejected(self):
        with pytest.raises(ValidationError):
            SplitSpec(0.5, 0.5, 0.5)

    def test_too_few_music_rejected(self):
        spec = SynthSpec(n_music=2, videos_per_music=1, sec_min=8, sec_max=8)
        corpus = synth_corpus(spec, seed=0)
        with pytest.raises(ValidationError):
            split_corpus(corpus, SplitSpec(0.4, 0.3, 0.3))
