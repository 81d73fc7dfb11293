"""Stage orchestration with on-disk caching.

Each stage writes its artifact plus a `.inputs` sidecar holding a hash of
everything the stage depends on; a rerun with unchanged inputs reuses the
artifact. All reports are serialized deterministically (sorted keys, no
timestamps), so a rerun of the same configuration reproduces them
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import (
    Corpus,
    SplitSpec,
    SynthSpec,
    load_corpus,
    save_corpus,
    split_corpus,
    synth_corpus,
)
from .features import (
    PairClips,
    PairFeatures,
    compute_corpus_clips,
    compute_pair_features,
)
from .models import ClipExtractor, MUSIC_EXTRACTOR, VIDEO_EXTRACTOR
from .quantize import BinSpec, calibrate_binspec
from .retrieval import RetrievalReport, evaluate
from .signal import FlowStat, RhythmStats
from .tagset import UnifiedTagSet, assign_labels, export_tagset, load_tagset
from .training import (
    ModelBundle,
    PretrainConfig,
    TrainConfig,
    fit,
    generic_extractors,
    grid_search,
    load_bundle,
    load_checkpoint,
    new_bundle,
    pretrain_extractors,
    save_bundle,
    save_checkpoint,
)

OUTPUT_DIR_ENV = "VMMATCH_OUT"

MODES = ("AE", "A-SE", "SE", "SE&R")


def resolve_out_dir(cli_value: str | None) -> Path:
    """CLI value wins; otherwise the environment override; otherwise ./runs."""
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get(OUTPUT_DIR_ENV, "runs"))


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_json_dumps(obj) + "\n")


def _hash_text(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode())
        h.update(b"\x00")
    return h.hexdigest()


def _cache_valid(artifact: Path, key: str) -> bool:
    sidecar = artifact.with_suffix(artifact.suffix + ".inputs")
    return artifact.exists() and sidecar.exists() and sidecar.read_text() == key


def _mark_cached(artifact: Path, key: str):
    sidecar = artifact.with_suffix(artifact.suffix + ".inputs")
    sidecar.write_text(key)


# -- synth + tagset ------------------------------------------------------------


def stage_synth(spec: SynthSpec, seed: int, out_dir: Path) -> Corpus:
    corpus_dir = out_dir / "corpus"
    manifest = corpus_dir / "manifest.json"
    key = _hash_text("synth-v1", _json_dumps(asdict(spec)), str(seed))
    if _cache_valid(manifest, key):
        return load_corpus(corpus_dir, manifest)
    corpus = synth_corpus(spec, seed)
    save_corpus(corpus, corpus_dir)
    _mark_cached(manifest, key)
    return corpus


def stage_tagset(corpus: Corpus, out_dir: Path) -> UnifiedTagSet:
    path = out_dir / "tagset.json"
    key = _hash_text("tagset-v1", corpus.content_hash())
    if _cache_valid(path, key):
        return load_tagset(path)
    tagset = assign_labels(corpus)
    export_tagset(tagset, path)
    _mark_cached(path, key)
    return tagset


# -- clip/statistic extraction -------------------------------------------------


def _save_clips(path: Path, clips: list[PairClips]):
    tensors: dict[str, np.ndarray] = {}
    meta = {"pairs": []}
    for i, c in enumerate(clips):
        p = f"c{i:04d}"
        tensors[f"{p}.video"] = c.video_matrices
        tensors[f"{p}.music"] = c.music_matrices
        tensors[f"{p}.n_beat"] = np.array([r.n_beat for r in c.rhythm],
                                          dtype=np.int64)
        tensors[f"{p}.s_beat"] = np.array(
            [r.s_beat if r.s_beat is not None else np.nan for r in c.rhythm])
        tensors[f"{p}.l_bar"] = np.array(
            [r.l_bar if r.l_bar is not None else np.nan for r in c.rhythm])
        tensors[f"{p}.m_bar"] = np.array([f.m_bar for f in c.flows])
        meta["pairs"].append({"pair_id": c.pair_id, "music_id": c.music_id,
                              "tags": c.tags, "n_clips": c.n_clips})
    save_checkpoint(path, tensors, meta)


def _load_clips(path: Path) -> list[PairClips]:
    tensors, meta = load_checkpoint(path)
    clips = []
    for i, entry in enumerate(meta["pairs"]):
        p = f"c{i:04d}"
        n_beat = tensors[f"{p}.n_beat"]
        s_beat = tensors[f"{p}.s_beat"]
        l_bar = tensors[f"{p}.l_bar"]
        rhythm = [RhythmStats(int(n),
                              None if np.isnan(s) else float(s),
                              None if np.isnan(lb) else float(lb))
                  for n, s, lb in zip(n_beat, s_beat, l_bar)]
        flows = [FlowStat(float(m)) for m in tensors[f"{p}.m_bar"]]
        clips.append(PairClips(
            entry["pair_id"], entry["music_id"], list(entry["tags"]),
            int(entry["n_clips"]),
            tensors[f"{p}.video"].astype(np.float32),
            tensors[f"{p}.music"].astype(np.float32),
            rhythm, flows))
    return clips


def stage_clips(corpus: Corpus, out_dir: Path) -> list[PairClips]:
    path = out_dir / "clips.bin"
    key = _hash_text("clips-v1", corpus.content_hash())
    if _cache_valid(path, key):
        return _load_clips(path)
    clips = compute_corpus_clips(corpus)
    _save_clips(path, clips)
    _mark_cached(path, key)
    return clips


# -- pretraining + features ----------------------------------------------------


def stage_pretrain(clips: list[PairClips], tagset: UnifiedTagSet,
                   cfg: PretrainConfig, out_dir: Path, clips_key: str
                   ) -> tuple[ClipExtractor, ClipExtractor]:
    path = out_dir / "extractors.ckpt"
    key = _hash_text("pretrain-v1", clips_key, _json_dumps(asdict(cfg)),
                     _json_dumps(tagset.vocab))
    if _cache_valid(path, key):
        tensors, meta = load_checkpoint(path)
        vext = ClipExtractor(VIDEO_EXTRACTOR, meta["n_classes"],
                             np.random.default_rng(0))
        mext = ClipExtractor(MUSIC_EXTRACTOR, meta["n_classes"],
                             np.random.default_rng(0))
        vext.load_state({k[5:]: v for k, v in tensors.items()
                         if k.startswith("vext.")})
        mext.load_state({k[5:]: v for k, v in tensors.items()
                         if k.startswith("mext.")})
        return vext, mext
    vext, mext, logs = pretrain_extractors(clips, tagset, cfg)
    tensors = {}
    tensors.update(vext.state("vext"))
    tensors.update(mext.state("mext"))
    save_checkpoint(path, tensors, {"n_classes": tagset.size})
    _write_json(out_dir / "pretrain_log.json", logs)
    _mark_cached(path, key)
    return vext, mext


def clips_content_key(corpus: Corpus) -> str:
    return _hash_text("clips-v1", corpus.content_hash())


def stage_features(clips: list[PairClips], tagset: UnifiedTagSet,
                   vext: ClipExtractor, mext: ClipExtractor,
                   ae_seed: int = 0) -> list[PairFeatures]:
    ae_v, ae_m = generic_extractors(tagset.size, ae_seed)
    return [compute_pair_features(c, tagset, vext, mext, ae_v, ae_m)
            for c in clips]


def calibrate_from_clips(clips: list[PairClips]) -> BinSpec:
    rhythm = [r for c in clips for r in c.rhythm]
    flows = [f for c in clips for f in c.flows]
    return calibrate_binspec(rhythm, flows)


# -- training + evaluation -----------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Resolved end-to-end run settings, snapshotted next to all artifacts."""

    synth: SynthSpec = field(
        default_factory=lambda: SynthSpec(n_music=32, videos_per_music=2))
    split: tuple = (0.7, 0.15, 0.15)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return {"synth": asdict(self.synth), "split": list(self.split),
                "pretrain": asdict(self.pretrain),
                "train": asdict(self.train), "seed": self.seed}


def report_to_dict(report: RetrievalReport) -> dict:
    return {
        "k_values": list(report.k_values),
        "recalls": {str(k): report.recalls[k] for k in report.k_values},
        "pool_size": report.pool_size,
        "n_queries": report.n_queries,
        "config": report.config,
    }


def prepare_splits(corpus: Corpus, cfg: RunConfig
                   ) -> tuple[Corpus, Corpus, Corpus]:
    tr, va, te = cfg.split
    return split_corpus(corpus, SplitSpec(tr, va, te, seed=cfg.seed))


@dataclass
class PreparedData:
    tagset: UnifiedTagSet
    binspec: BinSpec
    train_feats: list[PairFeatures]
    val_feats: list[PairFeatures]
    test_feats: list[PairFeatures]


def prepare_data(corpus: Corpus, cfg: RunConfig, out_dir: Path
                 ) -> PreparedData:
    """Tag unification, splits, clip statistics, pretraining, features."""
    tagset = stage_tagset(corpus, out_dir)
    train_c, val_c, test_c = prepare_splits(corpus, cfg)
    clips = stage_clips(corpus, out_dir)
    by_id = {c.pair_id: c for c in clips}
    train_clips = [by_id[p.pair_id] for p in train_c.pairs]
    binspec = calibrate_from_clips(train_clips)
    vext, mext = stage_pretrain(train_clips, tagset, cfg.pretrain, out_dir,
                                clips_content_key(train_c))
    feats = {}
    for name, sub in (("train", train_c), ("val", val_c), ("test", test_c)):
        feats[name] = stage_features([by_id[p.pair_id] for p in sub.pairs],
                                     tagset, vext, mext, ae_seed=cfg.seed)
    return PreparedData(tagset, binspec, feats["train"], feats["val"],
                        feats["test"])


def run_training(data: PreparedData, cfg: RunConfig, out_dir: Path,
                 tag: str = "model") -> tuple[ModelBundle, list[dict]]:
    bundle = new_bundle(data.binspec, data.tagset, cfg.train.seed,
                        cfg.to_dict())
    log = fit(bundle.matcher, data.binspec, data.train_feats, data.val_feats,
              cfg.train)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{tag}_log.jsonl", "w") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    save_bundle(out_dir / f"{tag}.ckpt", bundle)
    return bundle, log

def run_eval(bundle: ModelBundle, feats: list[PairFeatures], mode: str,
             out_dir: Path, tag: str = "report",
             k_values=(1, 5, 10, 25), paired_attention: bool = False
             ) -> RetrievalReport:
    report = evaluate(bundle.matcher, feats, mode, bundle.binspec,
                      k_values, paired_attention)
    report.config = {"mode": mode, "paired_attention": paired_attention}
    report.validate()
    _write_json(out_dir / f"{tag}.json", report_to_dict(report))
    return report


def run_grid(data: PreparedData, cfg: RunConfig, grids: dict[str, list],
             out_dir: Path, budget: int | None = None
             ) -> tuple[TrainConfig, list[dict]]:
    def make_matcher(seed):
        return new_bundle(data.binspec, data.tagset, seed).matcher

    best_cfg, rows = grid_search(make_matcher, data.binspec, data.train_feats,
                                 data.val_feats, cfg.train, grids, budget)
    _write_json(out_dir / "grid.json",
                {"cells": rows, "selected": asdict(best_cfg)})
    return best_cfg, rows


def run_ablation(data: PreparedData, cfg: RunConfig, out_dir: Path,
                 seeds=(0, 1, 2), modes=MODES) -> dict:
    """Train every mode with every seed; report per-seed and median test
    Recall@K per mode."""
    results: dict[str, dict] = {}
    for mode in modes:
        per_seed = []
        for seed in seeds:
            run_cfg = replace(cfg, train=replace(cfg.train, mode=mode,
                                                 seed=seed))
            bundle, _ = run_training(data, run_cfg, out_dir / "ablation",
                                     tag=f"{_slug(mode)}_s{seed}")
            rep = run_eval(bundle, data.test_feats, mode,
                           out_dir / "ablation",
                           tag=f"{_slug(mode)}_s{seed}_report")
            per_seed.append({str(k): rep.recalls[k] for k in rep.k_values})
        medians = {k: statistics.median(float(r[k]) for r in per_seed)
                   for k in per_seed[0]}
        results[mode] = {"per_seed": per_seed, "median": medians}
    _write_json(out_dir / "ablation.json", results)
    return results


def _slug(mode: str) -> str:
    return mode.replace("&", "n").replace("-", "").lower()


def run_e2e(cfg: RunConfig, out_dir: Path) -> dict:
    """Full pipeline: synthesize, unify tags, features, pretrain, train,
    evaluate. Returns the final test report dict."""
    corpus = stage_synth(cfg.synth, cfg.seed, out_dir)
    data = prepare_data(corpus, cfg, out_dir)
    bundle, _ = run_training(data, cfg, out_dir)
    report = run_eval(bundle, data.test_feats, cfg.train.mode, out_dir)
    summary = {"config": cfg.to_dict(), "report": report_to_dict(report)}
    _write_json(out_dir / "summary.json", summary)
    return summary
