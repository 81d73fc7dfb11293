"""End-to-end acceptance gate.

Each test prints a PASS line with the measured quantity so the suite output
doubles as an acceptance report. Budgets are asserted with wall-clock
timers. The overfit and trend tests train real models and are marked slow.
"""

import json
import math
import time
from collections import Counter

import numpy as np
import pytest

from gradcheck import check_grads
from vmmatch.corpus import Corpus, MediaPair, SynthSpec, synth_corpus
from vmmatch.features import (
    PairFeatures,
    compute_pair_clips,
    compute_corpus_clips,
    compute_pair_features,
)
from vmmatch.models import (
    ClipExtractor,
    MUSIC_EXTRACTOR,
    Matcher,
    VIDEO_EXTRACTOR,
    text_embed,
)
from vmmatch.nn import (
    MLP,
    Conv1d,
    DepthwiseConv1d,
    FeedForward,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    Tensor,
    no_grad,
)
from vmmatch.nn.layers import TransformerEncoderLayer
from vmmatch.pipeline import RunConfig, run_e2e
from vmmatch.quantize import QuantEmbedTables, calibrate_binspec, default_binspec
from vmmatch.retrieval import (
    build_index,
    encode_pairs,
    evaluate,
    query,
    rank_by_distance,
)
from vmmatch.signal import FlowStat, RhythmStats, onset_envelope, pcm_to_float, rhythm_stats, track_beats
from vmmatch.corpus import synth_click_track
from vmmatch.tagset import assign_labels
from vmmatch.training import (
    PretrainConfig,
    TrainConfig,
    fit,
    generic_extractors,
    load_bundle,
    loss_atag,
    loss_av,
    loss_ce,
    loss_regular,
    loss_vtag,
    new_bundle,
    pretrain_extractors,
    save_bundle,
)


# -- 1. label-unification oracle -------------------------------------------------


def _oracle_labels(tagging):
    pooled = {m: Counter(t for v in videos for t in v)
              for m, videos in tagging.items()}
    doc_freq = Counter()
    for counts in pooled.values():
        doc_freq.update(counts.keys())
    n = len(pooled)
    out = {}
    for mid, counts in pooled.items():
        total = sum(counts.values())
        best = min(counts, key=lambda t: (-(counts[t] / total
                                            * math.log(n / (doc_freq[t] + 1))),
                                          t))
        out[mid] = best
    return out


def test_label_unification_oracle_50_corpora():
    t0 = time.monotonic()
    rng = np.random.default_rng(123)
    vocab = [f"t{i}" for i in range(12)]
    for trial in range(50):
        n_music = int(rng.integers(2, 9))
        tagging = {}
        pairs = []
        for i in range(n_music):
            mid = f"m{i}"
            videos = []
            for j in range(int(rng.integers(1, 4))):
                tags = list(rng.choice(vocab, size=int(rng.integers(1, 5))))
                videos.append(tags)
                video = np.zeros((1, 4, 4), dtype=np.uint8)
                music = np.zeros(16000, dtype=np.int16)
                pairs.append(MediaPair(f"{mid}_v{j}", video, music, tags, mid))
            tagging[mid] = videos
        got = assign_labels(Corpus(pairs)).label_of_music
        assert got == _oracle_labels(tagging), f"trial {trial}"
    dt = time.monotonic() - t0
    assert dt < 10.0, f"label oracle took {dt:.1f}s"
    print(f"\nPASS label unification: 50/50 corpora exact in {dt:.2f}s")


# -- 2. loss-stack oracle ---------------------------------------------------------


def _d(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))


def _trip(a, p, n, m):
    return max(_d(a, p) - _d(a, n) + m, 0.0)


def _msev(a, b):
    return sum((x - y) ** 2 for x, y in zip(a, b)) / len(a)


def test_loss_stack_oracle_1e12():
    rng = np.random.default_rng(99)
    margin = 0.4
    keys_p = ("theta_v", "theta_m", "theta_tag")
    keys_x = ("xi_v", "xi_m", "xi_rec_v", "xi_rec_m", "phi_v", "phi_m",
              "phi_tag", "xi_tag")
    v = {k: rng.normal(size=(3, 5)) for k in keys_p}
    v.update({k: rng.normal(size=(3, 7)) for k in keys_x})
    neg = np.array([1, 2, 0])
    t = {k: Tensor(x) for k, x in v.items()}
    tn = {k: Tensor(v[k][neg]) for k in v}

    got = {
        "av": loss_av(t["theta_v"], t["theta_m"], tn["theta_v"],
                      tn["theta_m"], margin).item(),
        "vtag": loss_vtag(t["theta_v"], t["theta_tag"], tn["theta_v"],
                          tn["theta_tag"], t["phi_tag"], t["phi_v"],
                          tn["phi_v"], margin).item(),
        "atag": loss_atag(t["theta_m"], t["theta_tag"], tn["theta_m"],
                          tn["theta_tag"], t["phi_tag"], t["phi_m"],
                          tn["phi_m"], margin).item(),
        "regular": loss_regular(t["xi_v"], t["xi_m"], t["xi_rec_v"],
                                t["xi_rec_m"], t["phi_v"], t["phi_m"],
                                t["phi_tag"], t["xi_tag"], t["theta_v"],
                                t["theta_m"], t["theta_tag"]).item(),
    }

    # scalar-by-scalar transcription of all nine triplet terms ...
    want_av = want_vtag = want_atag = want_reg = 0.0
    for i in range(3):
        j = neg[i]
        tv, tm, tt = v["theta_v"][i], v["theta_m"][i], v["theta_tag"][i]
        tvn, tmn, ttn = v["theta_v"][j], v["theta_m"][j], v["theta_tag"][j]
        pv, pm, pt = v["phi_v"][i], v["phi_m"][i], v["phi_tag"][i]
        pvn, pmn = v["phi_v"][j], v["phi_m"][j]
        want_av += _trip(tv, tm, tmn, margin) + _trip(tm, tv, tvn, margin)
        want_vtag += (_trip(tv, tt, tvn, margin) + _trip(tt, tv, ttn, margin)
                      + _trip(pt, pv, pvn, margin))
        want_atag += (_trip(tm, tt, tmn, margin) + _trip(tt, tm, tmn, margin)
                      + _trip(pt, pm, pmn, margin))
        # ... and all seven reconstruction/alignment terms
        want_reg += (_msev(v["xi_v"][i], v["xi_rec_v"][i])
                     + _msev(v["xi_m"][i], v["xi_rec_m"][i])
                     + _msev(pv, v["xi_tag"][i]) + _msev(pm, v["xi_tag"][i])
                     + _msev(pt, v["xi_tag"][i])
                     + _msev(tv, tt) + _msev(tm, tt))
    want = {"av": want_av / 3, "vtag": want_vtag / 3, "atag": want_atag / 3,
            "regular": want_reg / 3}
    for name in got:
        assert abs(got[name] - want[name]) < 1e-12, (
            f"{name}: {got[name]} vs oracle {want[name]}")

    logits = rng.normal(size=(3, 2))
    labels = np.array([1, 0, 1])
    ce = loss_ce(Tensor(logits), labels).item()
    want_ce = -np.mean([logits[i, labels[i]]
                        - math.log(sum(math.exp(x) for x in logits[i]))
                        for i in range(3)])
    assert abs(ce - want_ce) < 1e-12
    print("\nPASS loss stack: 9 triplet + 7 mse + ce terms within 1e-12")


# -- 3. gradient checks -----------------------------------------------------------


def test_gradient_checks_all_blocks_3_seeds():
    t0 = time.monotonic()
    for seed in (0, 1, 2):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.normal(size=(2, 3, 8)), requires_grad=True)
        flat = Tensor(rng.normal(size=(4, 8)), requires_grad=True)
        mask = np.ones((2, 3), dtype=bool)

        blocks = {
            "linear": (Linear(8, 5, rng), lambda b: (b(flat) ** 2).sum()),
            "mlp": (MLP(8, 6, 4, rng), lambda b: (b(flat) ** 2).sum()),
            "layer_norm": (LayerNorm(8), lambda b: (b(flat) ** 2).sum()),
            "attention": (MultiHeadAttention(8, 2, rng),
                          lambda b: (b(x, x) ** 2).sum()),
            "feed_forward": (FeedForward(8, 16, rng),
                             lambda b: (b(x) ** 2).sum()),
            "encoder_layer": (TransformerEncoderLayer(8, 2, 16, rng),
                              lambda b: (b(x, mask) ** 2).sum()),
            "conv": (Conv1d(8, 5, 2, 1, rng), lambda b: (b(x) ** 2).sum()),
            "depthwise_conv": (DepthwiseConv1d(8, 3, rng),
                               lambda b: (b(x) ** 2).sum()),
        }
        for name, (block, loss_fn) in blocks.items():
            params = dict(block.named_params())
            params["input"] = flat if name in ("linear", "mlp",
                                               "layer_norm") else x
            check_grads(lambda: loss_fn(block), params, sample=6,
                        rng=np.random.default_rng(seed))

        tables = QuantEmbedTables(default_binspec(), rng)
        bins = rng.integers(0, tables.m_bar.shape[0], size=(2, 3))
        check_grads(lambda: (tables.flow_embedding(bins) ** 2).sum(),
                    dict(tables.named_params()), sample=4,
                    rng=np.random.default_rng(seed))

        # loss stack gradients through real branch tensors
        vs = {k: Tensor(rng.normal(size=(3, 4)), requires_grad=True)
              for k in ("theta_v", "theta_m", "theta_tag")}
        neg = np.array([1, 2, 0])
        tn = {k: Tensor(vs[k].data[neg].copy()) for k in vs}

        def loss_fn():
            return (loss_av(vs["theta_v"], vs["theta_m"], tn["theta_v"],
                            tn["theta_m"], 0.3)
                    + loss_atag(vs["theta_m"], vs["theta_tag"],
                                tn["theta_m"], tn["theta_tag"],
                                vs["theta_v"], vs["theta_m"],
                                tn["theta_m"], 0.3))

        check_grads(loss_fn, vs, sample=6, rng=np.random.default_rng(seed))
    dt = time.monotonic() - t0
    assert dt < 300.0, f"gradient checks took {dt:.0f}s"
    print(f"\nPASS gradient checks: all blocks x 3 seeds in {dt:.1f}s")


# -- 4. shape contracts -----------------------------------------------------------


def test_shape_contracts_through_real_pipeline():
    corpus = synth_corpus(SynthSpec(n_music=2, videos_per_music=1,
                                    sec_min=9, sec_max=9), seed=0)
    tagset = assign_labels(corpus)
    clips = compute_pair_clips(corpus.pairs[0])
    assert clips.music_matrices.shape[1:] == (398, 80)
    assert clips.video_matrices.shape[1:] == (896, 224)
    rng = np.random.default_rng(0)
    vext = ClipExtractor(VIDEO_EXTRACTOR, 2, rng)
    mext = ClipExtractor(MUSIC_EXTRACTOR, 2, rng)
    aev, aem = generic_extractors(2, 0)
    feats = compute_pair_features(clips, tagset, vext, mext, aev, aem)
    assert feats.f_v.shape == (3, 512) and feats.f_m.shape == (3, 512)
    assert feats.ae_v.shape == (512,) and feats.ae_m.shape == (512,)

    binspec = default_binspec()
    m = Matcher(binspec, rng)
    mask = np.ones((1, 3), dtype=bool)
    xi_v = m.encode_sequence(feats.f_v[None], mask, "video", "SE")
    xi_m = m.encode_sequence(feats.f_m[None], mask, "music", "SE")
    out = m.pair_heads(xi_v, xi_m, text_embed(feats.tag)[None])
    for key in ("xi_v", "xi_m", "phi_v", "phi_m", "phi_tag",
                "xi_rec_v", "xi_rec_m"):
        assert out[key].shape == (1, 768), key
    for key in ("theta_v", "theta_m", "theta_tag"):
        assert out[key].shape == (1, 256), key
    rb = np.asarray([feats.rhythm_bins(binspec)])
    fb = np.asarray([feats.flow_bins(binspec)])
    assert m.quant.rhythm_embedding(rb).shape == (1, 3, 512)
    assert m.quant.flow_embedding(fb).shape == (1, 3, 512)
    print("\nPASS shape contracts: 398x80, 896x224, 512/768/256, plug-ins 512")


# -- 5. rhythm and flow oracles ---------------------------------------------------


def test_beat_oracle_click_tracks():
    expected = {60: 4, 90: 6, 120: 8, 150: 10}
    for bpm, per_clip in expected.items():
        pcm = pcm_to_float(synth_click_track(
            28, float(bpm), np.random.default_rng(0), tone_hz=440.0))
        times, strengths = track_beats(onset_envelope(pcm))
        for k in range(7):
            st = rhythm_stats(times, strengths, (4.0 * k, 4.0 * (k + 1)))
            assert st.n_beat == per_clip, (bpm, k, st.n_beat)
            assert st.l_bar == pytest.approx(60.0 / bpm, abs=0.02), (bpm, k)
    print("\nPASS beat oracle: 60/90/120/150 BPM exact counts, "
          "intervals within 0.02s")


def test_flow_strictly_monotone_over_speeds():
    from vmmatch.signal import optical_flow_stat
    rng = np.random.default_rng(0)
    base = rng.random((224, 224))
    mags = []
    for speed in (1, 2, 3, 5, 7):
        frames = np.stack([np.roll(base, s * speed, axis=1)
                           for s in range(4)])
        mags.append(optical_flow_stat(frames).m_bar)
    assert all(b > a for a, b in zip(mags, mags[1:])), mags
    print(f"\nPASS flow oracle: strictly monotone magnitudes {mags}")


# -- 6. retrieval sanity ----------------------------------------------------------


def _synth_features(n_music, videos_per_music, seed=0, t=2):
    rng = np.random.default_rng(seed)
    feats = []
    for i in range(n_music):
        f_m = rng.normal(size=(t, 512))
        ae_m = rng.normal(size=512)
        for j in range(videos_per_music):
            feats.append(PairFeatures(
                f"m{i}_v{j}", f"music{i:03d}", "tag", 0,
                rng.normal(size=(t, 512)), f_m, rng.normal(size=512), ae_m,
                [RhythmStats(4, 1.0, 0.5)] * t, [FlowStat(1.0)] * t))
    return feats


def test_retrieval_sanity():
    binspec = default_binspec()

    # (a) identity: query projection equal to the true candidate's -> 100%
    m = Matcher(binspec, np.random.default_rng(1))
    m.v_adapter.load_state(m.m_adapter.state())
    m.v_pos.data = m.m_pos.data.copy()
    m.v_encoder.load_state(m.m_encoder.state())
    m.v_proj.load_state(m.m_proj.state())
    feats = _synth_features(12, 1, seed=2)
    for f in feats:
        f.f_v[:] = f.f_m
    index = build_index(m, feats, "SE", binspec)
    xi_v, _ = encode_pairs(m, feats, "SE", binspec)
    hits = sum(query(m, xi_v[i], index, 1, paired_attention=False)[0]
               == feats[i].music_id for i in range(len(feats)))
    assert hits == len(feats)

    # (b) untrained model at chance over 500 queries, pool 20
    m2 = Matcher(binspec, np.random.default_rng(3))
    feats2 = _synth_features(20, 25, seed=4)
    rep = evaluate(m2, feats2, "SE", binspec, k_values=(1, 5, 10),
                   paired_attention=False)
    assert rep.n_queries == 500
    for k in (1, 5, 10):
        chance = 100.0 * k / rep.pool_size
        assert abs(rep.recalls[k] - chance) <= 5.0, (k, rep.recalls[k])

    # (c) rankings in both modes equal a brute-force distance sort
    m3 = Matcher(binspec, np.random.default_rng(5))
    feats3 = _synth_features(8, 2, seed=6)
    index3 = build_index(m3, feats3, "SE", binspec)
    xi_v3, _ = encode_pairs(m3, feats3, "SE", binspec)
    for qi in range(0, 16, 5):
        dists = []
        with no_grad():
            for ci in range(index3.pool_size):
                qv = Tensor(xi_v3[qi][None, :])
                cm = Tensor(index3.xi[ci][None, :])
                av, am = m3.cross_attention(qv, cm)
                tv = m3.project(qv, av, "video").data[0]
                tm = m3.project(cm, am, "music").data[0]
                dists.append(float(np.sqrt(((tv - tm) ** 2).sum())))
        assert (query(m3, xi_v3[qi], index3, index3.pool_size,
                      paired_attention=True)
                == rank_by_distance(np.array(dists), index3.music_ids))
        with no_grad():
            qv = Tensor(xi_v3[qi][None, :])
            tv = m3.project(qv, Tensor(np.zeros_like(qv.data)),
                            "video").data[0]
        fast = np.sqrt(((index3.theta - tv) ** 2).sum(axis=1))
        assert (query(m3, xi_v3[qi], index3, index3.pool_size)
                == rank_by_distance(fast, index3.music_ids))
    print(f"\nPASS retrieval sanity: identity 100%, chance "
          f"{rep.recalls[1]:.1f}% (expect 5±5), rankings = brute force")


# -- helpers for the training criteria --------------------------------------------


def _prepare(spec, seed, pretrain_epochs=6):
    corpus = synth_corpus(spec, seed=seed)
    tagset = assign_labels(corpus)
    clips = compute_corpus_clips(corpus)
    binspec = calibrate_binspec([r for c in clips for r in c.rhythm],
                                [f for c in clips for f in c.flows])
    vext, mext, _ = pretrain_extractors(
        clips, tagset, PretrainConfig(epochs=pretrain_epochs, seed=seed))
    aev, aem = generic_extractors(tagset.size, seed)
    feats = [compute_pair_features(c, tagset, vext, mext, aev, aem)
             for c in clips]
    return tagset, binspec, feats


# -- 7. overfit probe -------------------------------------------------------------


@pytest.mark.slow
def test_overfit_probe_32_pairs():
    t0 = time.monotonic()
    spec = SynthSpec(n_music=8, videos_per_music=4, sec_min=8, sec_max=16,
                     label_groups=8)
    tagset, binspec, feats = _prepare(spec, seed=0)
    assert len(feats) == 32
    bundle = new_bundle(binspec, tagset, seed=0)
    cfg = TrainConfig(mode="SE", epochs=200, batch_size=16, lr=1e-3,
                      eval_every=5, patience=100, seed=0, target_recall=90.0)
    fit(bundle.matcher, binspec, feats, feats, cfg)
    rep = evaluate(bundle.matcher, feats, "SE", binspec, (1,))
    dt = time.monotonic() - t0
    assert rep.recalls[1] >= 90.0, f"train R@1 = {rep.recalls[1]:.1f}%"
    assert dt < 600.0, f"overfit probe took {dt:.0f}s"
    print(f"\nPASS overfit probe: train R@1 = {rep.recalls[1]:.1f}% "
          f"in {dt:.0f}s")


# -- 8. mode-ordering trend -------------------------------------------------------


@pytest.mark.slow
def test_mode_ordering_trend():
    t0 = time.monotonic()
    spec = SynthSpec(n_music=64, videos_per_music=4, sec_min=8, sec_max=16,
                     rhythm_correlated=True)
    from vmmatch.corpus import SplitSpec, split_corpus
    corpus = synth_corpus(spec, seed=0)
    tagset = assign_labels(corpus)
    train_c, val_c, test_c = split_corpus(corpus, SplitSpec(0.7, 0.15, 0.15))
    clips = compute_corpus_clips(corpus)
    by_id = {c.pair_id: c for c in clips}
    train_clips = [by_id[p.pair_id] for p in train_c.pairs]
    binspec = calibrate_binspec([r for c in train_clips for r in c.rhythm],
                                [f for c in train_clips for f in c.flows])
    vext, mext, _ = pretrain_extractors(train_clips, tagset,
                                        PretrainConfig(epochs=6, seed=0))
    aev, aem = generic_extractors(tagset.size, 0)
    split_feats = {}
    for name, sub in (("train", train_c), ("val", val_c), ("test", test_c)):
        split_feats[name] = [compute_pair_features(by_id[p.pair_id], tagset,
                                                   vext, mext, aev, aem)
                             for p in sub.pairs]

    medians = {}
    for mode in ("AE", "A-SE", "SE", "SE&R"):
        r1s = []
        for seed in (0, 1, 2):
            bundle = new_bundle(binspec, tagset, seed=seed)
            cfg = TrainConfig(mode=mode, epochs=12, batch_size=32, lr=1e-3,
                              eval_every=4, patience=3, seed=seed)
            fit(bundle.matcher, binspec, split_feats["train"],
                split_feats["val"], cfg)
            rep = evaluate(bundle.matcher, split_feats["test"], mode,
                           binspec, (1,))
            r1s.append(rep.recalls[1])
        medians[mode] = float(np.median(r1s))
        print(f"  {mode}: per-seed R@1 {r1s} median {medians[mode]:.1f}")

    dt = time.monotonic() - t0
    assert medians["SE&R"] > medians["SE"], medians
    assert medians["SE"] >= medians["A-SE"], medians
    assert medians["A-SE"] > medians["AE"], medians
    assert medians["SE&R"] >= 1.2 * medians["AE"], medians
    assert dt < 3600.0, f"trend test took {dt:.0f}s"
    print(f"\nPASS trend: {medians} in {dt:.0f}s")


# -- 9. determinism ---------------------------------------------------------------


@pytest.mark.slow
def test_end_to_end_determinism(tmp_path):
    cfg = RunConfig(
        synth=SynthSpec(n_music=6, videos_per_music=2, sec_min=8, sec_max=9),
        pretrain=PretrainConfig(epochs=1),
        train=TrainConfig(mode="SE", epochs=2, batch_size=4, eval_every=1),
        seed=0)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run_e2e(cfg, out)
        outs.append(out)
    for fname in ("summary.json", "report.json", "model_log.jsonl",
                  "tagset.json"):
        a = (outs[0] / fname).read_bytes()
        b = (outs[1] / fname).read_bytes()
        assert a == b, f"{fname} differs between identical runs"
    assert ((outs[0] / "model.ckpt").read_bytes()
            == (outs[1] / "model.ckpt").read_bytes())

    # checkpoint round trip is bitwise
    bundle = load_bundle(outs[0] / "model.ckpt")
    save_bundle(outs[0] / "again.ckpt", bundle)
    reloaded = load_bundle(outs[0] / "again.ckpt")
    a, b = bundle.named_arrays(), reloaded.named_arrays()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    print("\nPASS determinism: byte-identical reports and checkpoints")
