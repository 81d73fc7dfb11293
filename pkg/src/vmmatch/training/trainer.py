"""Training loops: extractor pretraining, matcher fitting, grid search,
and whole-model persistence."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from ..features import PairClips, PairFeatures, batch_features
from ..models import (
    ClipExtractor,
    MUSIC_EXTRACTOR,
    Matcher,
    VIDEO_EXTRACTOR,
    text_embed,
)
from ..nn import Adam, Tensor
from ..quantize import BinSpec
from ..retrieval import evaluate
from ..tagset import UnifiedTagSet
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import batch_losses, loss_ce, total_loss


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "SE"
    margin: float = 0.5
    lr: float = 1e-3
    weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0)   # av, vtag, atag, regular, ce
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 5
    patience: int = 20
    symmetrize_atag: bool = False
    paired_attention: bool = False
    k_values: tuple = (1, 5, 10, 25)
    target_recall: float | None = None   # stop once val R@1 reaches this


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 25
    lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0


# -- extractor pretraining ----------------------------------------------------


def _clip_dataset(clips: list[PairClips], tagset: UnifiedTagSet, key: str):
    mats, labels = [], []
    for pc in clips:
        label = tagset.label_id(pc.music_id)
        source = pc.video_matrices if key == "video" else pc.music_matrices
        for t in range(pc.n_clips):
            mats.append(source[t])
            labels.append(label)
    return np.stack(mats), np.array(labels, dtype=np.int64)


def _train_classifier(extractor: ClipExtractor, mats: np.ndarray,
                      labels: np.ndarray, cfg: PretrainConfig,
                      rng: np.random.Generator) -> list[dict]:
    opt = Adam(extractor.params(), cfg.lr)
    n = mats.shape[0]
    log = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        losses, correct = [], 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            x = Tensor(mats[idx].astype(np.float64))
            logits = extractor.logits(x)
            loss = loss_ce(logits, labels[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            correct += int((logits.data.argmax(axis=1) == labels[idx]).sum())
        log.append({"epoch": epoch, "loss": float(np.mean(losses)),
                    "accuracy": correct / n})
    return log


def pretrain_extractors(clips: list[PairClips], tagset: UnifiedTagSet,
                        cfg: PretrainConfig
                        ) -> tuple[ClipExtractor, ClipExtractor, dict]:
    """Train both clip extractors to classify the unified music label."""
    if tagset.size < 2:
        raise TrainError("pretraining needs at least 2 unified labels")
    seeds = np.random.SeedSequence([cfg.seed, 0xE77])
    v_rng, m_rng, loop_rng = (np.random.default_rng(s) for s in seeds.spawn(3))
    vext = ClipExtractor(VIDEO_EXTRACTOR, tagset.size, v_rng)
    mext = ClipExtractor(MUSIC_EXTRACTOR, tagset.size, m_rng)
    v_mats, v_labels = _clip_dataset(clips, tagset, "video")
    m_mats, m_labels = _clip_dataset(clips, tagset, "music")
    logs = {
        "video": _train_classifier(vext, v_mats, v_labels, cfg, loop_rng),
        "music": _train_classifier(mext, m_mats, m_labels, cfg, loop_rng),
    }
    return vext, mext, logs


def generic_extractors(n_classes: int, seed: int
                       ) -> tuple[ClipExtractor, ClipExtractor]:
    """Untrained (randomly initialized) extractors standing in for feature
    models trained on unrelated targets; their mean clip features provide
    the track-level embeddings consumed by the AE mode."""
    seeds = np.random.SeedSequence([seed, 0xAE])
    v_rng, m_rng = (np.random.default_rng(s) for s in seeds.spawn(2))
    return (ClipExtractor(VIDEO_EXTRACTOR, n_classes, v_rng),
            ClipExtractor(MUSIC_EXTRACTOR, n_classes, m_rng))


# -- matcher training --------------------------------------------------------


_TAG_CACHE: dict[str, np.ndarray] = {}


def tag_embedding(tag: str) -> np.ndarray:
    if tag not in _TAG_CACHE:
        _TAG_CACHE[tag] = text_embed(tag)
    return _TAG_CACHE[tag]


def _negative_indices(music_ids: list[str], rng: np.random.Generator
                      ) -> np.ndarray:
    neg = np.empty(len(music_ids), dtype=np.int64)
    for i, mid in enumerate(music_ids):
        cands = [j for j, other in enumerate(music_ids)
                 if other != mid]
        if not cands:
            raise TrainError("no in-batch negative with a different music")
        neg[i] = cands[int(rng.integers(len(cands)))]
    return neg


def _forward_batch(matcher: Matcher, feats: list[PairFeatures],
                   binspec: BinSpec, mode: str):
    batch = batch_features(feats, binspec)
    xi_v = matcher.encode_sequence(batch["f_v"], batch["mask"], "video", mode,
                                   flow_bins=batch["flow_bins"],
                                   track_embedding=batch["ae_v"])
    xi_m = matcher.encode_sequence(batch["f_m"], batch["mask"], "music", mode,
                                   rhythm_bins=batch["rhythm_bins"],
                                   track_embedding=batch["ae_m"])
    xi_tag = np.stack([tag_embedding(f.tag) for f in feats])
    return matcher.pair_heads(xi_v, xi_m, xi_tag)


def fit(matcher: Matcher, binspec: BinSpec, train_feats: list[PairFeatures],
        val_feats: list[PairFeatures] | None, cfg: TrainConfig
        ) -> list[dict]:
    """Train the matcher; returns the per-epoch training log.

    Early-stops when validation Recall@1 has not improved for `patience`
    evaluations and restores the best parameters seen.
    """
    if cfg.batch_size < 2:
        raise TrainError("batch size must be >= 2 for in-batch negatives")
    if cfg.mode not in ("AE", "A-SE", "SE", "SE&R"):
        raise TrainError(f"unknown mode {cfg.mode!r}")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xF17]))
    opt = Adam(matcher.params(), cfg.lr)
    log: list[dict] = []
    best_r1, best_state, stale = -1.0, None, 0
    n = len(train_feats)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        sums: dict[str, float] = {}
        steps = 0
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            if idx.size < 2:
                continue
            feats = [train_feats[i] for i in idx]
            music_ids = [f.music_id for f in feats]
            if len(set(music_ids)) < 2:
                continue
            pos = _forward_batch(matcher, feats, binspec, cfg.mode)
            neg_idx = _negative_indices(music_ids, rng)
            parts = batch_losses(matcher, pos, neg_idx, cfg.margin,
                                 cfg.symmetrize_atag)
            loss = total_loss(parts, cfg.weights)
            opt.zero_grad()
            loss.backward()
            opt.step()
            steps += 1
            for name, t in parts.items():
                sums[name] = sums.get(name, 0.0) + t.item()
            sums["total"] = sums.get("total", 0.0) + loss.item()
        record = {"epoch": epoch}
        record.update({k: v / max(steps, 1) for k, v in sums.items()})
        if val_feats and (epoch + 1) % cfg.eval_every == 0:
            report = evaluate(matcher, val_feats, cfg.mode, binspec,
                              cfg.k_values, cfg.paired_attention)
            record.update({f"val_recall@{k}": report.recalls[k]
                           for k in cfg.k_values})
            r1 = report.recalls[cfg.k_values[0]]
            if r1 > best_r1:
                best_r1, best_state, stale = r1, matcher.state(), 0
                if cfg.target_recall is not None and r1 >= cfg.target_recall:
                    log.append(record)
                    break
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.append(record)
                    break
        log.append(record)
    if best_state is not None:
        matcher.load_state(best_state)
    return log


def grid_search(make_matcher, binspec: BinSpec,
                train_feats: list[PairFeatures],
                val_feats: list[PairFeatures], base_cfg: TrainConfig,
                grids: dict[str, list], budget: int | None = None
                ) -> tuple[TrainConfig, list[dict]]:
    """Sweep config fields over `grids`; select by validation Recall@1 with
    Recall@5 tie-break. `make_matcher(seed)` builds a fresh model per cell."""
    if not grids or any(not v for v in grids.values()):
        raise TrainError("grid must be non-empty")
    names = sorted(grids)
    cells = list(itertools.product(*(grids[n] for n in names)))
    if budget is not None:
        cells = cells[:budget]
    report_rows = []
    best = None
    for cell in cells:
        cfg = replace(base_cfg, **dict(zip(names, cell)))
        matcher = make_matcher(cfg.seed)
        fit(matcher, binspec, train_feats, val_feats, cfg)
        rep = evaluate(matcher, val_feats, cfg.mode, binspec, cfg.k_values,
                       cfg.paired_attention)
        row = {"cell": dict(zip(names, cell)),
               "recalls": {str(k): rep.recalls[k] for k in cfg.k_values}}
        report_rows.append(row)
        key = (rep.recalls[1], rep.recalls.get(5, 0.0))
        if best is None or key > best[0]:
            best = (key, cfg)
    return best[1], report_rows


# -- persistence ---------------------------------------------------------------


@dataclass
class ModelBundle:
    """Everything needed to run inference: matcher, extractors, binning,
    unified tag set, and the resolved configuration snapshot."""

    matcher: Matcher
    video_extractor: ClipExtractor
    music_extractor: ClipExtractor
    ae_video_extractor: ClipExtractor
    ae_music_extractor: ClipExtractor
    binspec: BinSpec
    tagset: UnifiedTagSet
    config: dict = field(default_factory=dict)

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.matcher.state("matcher"))
        out.update(self.video_extractor.state("vext"))
        out.update(self.music_extractor.state("mext"))
        out.update(self.ae_video_extractor.state("ae_vext"))
        out.update(self.ae_music_extractor.state("ae_mext"))
        return out


def new_bundle(binspec: BinSpec, tagset: UnifiedTagSet, seed: int,
               config: dict | None = None) -> ModelBundle:
    seeds = np.random.SeedSequence([seed, 0xB0D])
    m_rng, v_rng, mu_rng = (np.random.default_rng(s) for s in seeds.spawn(3))
    matcher = Matcher(binspec, m_rng)
    vext = ClipExtractor(VIDEO_EXTRACTOR, tagset.size, v_rng)
    mext = ClipExtractor(MUSIC_EXTRACTOR, tagset.size, mu_rng)
    ae_v, ae_m = generic_extractors(tagset.size, seed)
    return ModelBundle(matcher, vext, mext, ae_v, ae_m, binspec, tagset,
                       dict(config or {}))


def save_bundle(path, bundle: ModelBundle, rng_state: dict | None = None):
    meta = {
        "binspec": bundle.binspec.to_dict(),
        "vocab": bundle.tagset.vocab,
        "label_of_music": bundle.tagset.label_of_music,
        "config": bundle.config,
        "rng_state": rng_state or {},
    }
    save_checkpoint(path, bundle.named_arrays(), meta)


def load_bundle(path) -> ModelBundle:
    tensors, meta = load_checkpoint(path)
    tagset = UnifiedTagSet(meta["vocab"], meta["label_of_music"])
    binspec = BinSpec.from_dict(meta["binspec"])
    bundle = new_bundle(binspec, tagset, seed=0, config=meta.get("config", {}))

    def sub(prefix):
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in tensors.items()
                if k.startswith(prefix + ".")}

    bundle.matcher.load_state(sub("matcher"))
    bundle.video_extractor.load_state(sub("vext"))
    bundle.music_extractor.load_state(sub("mext"))
    bundle.ae_video_extractor.load_state(sub("ae_vext"))
    bundle.ae_music_extractor.load_state(sub("ae_mext"))
    return bundle
