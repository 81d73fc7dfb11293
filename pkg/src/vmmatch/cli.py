"""Command-line interface.

Exit codes: 0 on success, 2 for validation/configuration problems,
3 for runtime failures (missing or corrupt files, I/O errors).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .corpus import Corpus, LoadError, SynthSpec, ValidationError, load_corpus
from .pipeline import (
    MODES,
    OUTPUT_DIR_ENV,
    RunConfig,
    prepare_data,
    report_to_dict,
    resolve_out_dir,
    run_ablation,
    run_e2e,
    run_eval,
    run_grid,
    run_training,
    stage_clips,
    stage_pretrain,
    stage_synth,
    stage_tagset,
    clips_content_key,
)
from .retrieval import EvalError
from .tagset import TagError
from .training import (
    CheckpointError,
    PretrainConfig,
    TrainConfig,
    TrainError,
    load_bundle,
)
from .io_formats import FormatError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_VALIDATION_ERRORS = (ValidationError, TagError, TrainError, EvalError,
                      FormatError, ValueError)
_RUNTIME_ERRORS = (LoadError, CheckpointError, OSError)


def _load_workspace_corpus(out: Path) -> Corpus:
    manifest = out / "corpus" / "manifest.json"
    if not manifest.exists():
        raise LoadError(f"no corpus manifest at {manifest}; run `synth` first")
    return load_corpus(out / "corpus", manifest)


def _synth_spec(args) -> SynthSpec:
    return SynthSpec(
        n_music=args.n_music,
        videos_per_music=args.videos_per_music,
        tag_vocab=args.tag_vocab,
        sec_min=args.sec_min,
        sec_max=args.sec_max,
        rhythm_correlated=not args.uncorrelated,
        label_groups=args.label_groups,
    )


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(
        mode=args.mode, margin=args.margin, lr=args.lr,
        weights=tuple(args.weights), epochs=args.epochs,
        batch_size=args.batch_size, seed=args.seed,
        eval_every=args.eval_every, patience=args.patience,
        paired_attention=args.paired_retrieval,
    )


def _run_cfg(args) -> RunConfig:
    synth = (_synth_spec(args) if hasattr(args, "n_music")
             else SynthSpec(n_music=32, videos_per_music=2))
    return RunConfig(synth=synth,
                     pretrain=PretrainConfig(epochs=args.pretrain_epochs,
                                             lr=args.pretrain_lr,
                                             seed=args.seed),
                     train=_train_cfg(args), seed=args.seed)


def _add_synth_args(p):
    p.add_argument("--n-music", type=int, default=32)
    p.add_argument("--videos-per-music", type=int, default=2)
    p.add_argument("--tag-vocab", type=int, default=32)
    p.add_argument("--sec-min", type=float, default=8.0)
    p.add_argument("--sec-max", type=float, default=16.0)
    p.add_argument("--label-groups", type=int, default=4)
    p.add_argument("--uncorrelated", action="store_true",
                   help="decouple video motion from music tempo")


def _add_train_args(p):
    p.add_argument("--mode", choices=MODES, default="SE&R")
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weights", type=float, nargs=5,
                   default=[1.0, 1.0, 1.0, 1.0, 1.0],
                   metavar=("AV", "VTAG", "ATAG", "REG", "CE"))
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--eval-every", type=int, default=5)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--pretrain-epochs", type=int, default=10)
    p.add_argument("--pretrain-lr", type=float, default=1e-3)
    p.add_argument("--paired-retrieval", action="store_true",
                   help="recompute query-candidate cross-attention when "
                        "ranking (slower; default ranks against fixed "
                        "projections)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vmmatch",
        description="Video-to-music retrieval with a unified tag space.")
    ap.add_argument("--out", default=None,
                    help=f"workspace directory (default: ${OUTPUT_DIR_ENV} "
                         "or ./runs)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired corpus")
    _add_synth_args(p)
    p.add_argument("--seed", type=int, default=0)

    sub.add_parser("tagset", help="unify video tags into per-music labels")

    sub.add_parser("features",
                   help="compute clips, rhythm and motion statistics")

    p = sub.add_parser("pretrain", help="train label-classifying extractors")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train the cross-modal matcher")
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("grid", help="sweep margin/lr/loss-weight settings")
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--margins", type=float, nargs="+",
                   default=[0.01, 0.1, 0.5, 1.0, 2.0, 4.0])
    p.add_argument("--lrs", type=float, nargs="+",
                   default=[1e-2, 1e-3, 1e-4, 1e-5])
    p.add_argument("--budget", type=int, default=None,
                   help="max number of grid cells to train")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", default=None,
                   help="model file (default: <out>/model.ckpt)")
    p.add_argument("--mode", choices=MODES, default=None,
                   help="override the mode stored in the checkpoint")
    p.add_argument("--paired-retrieval", action="store_true")
    p.add_argument("--emit-csv", default=None, metavar="PATH",
                   help="also write the recall table as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pretrain-epochs", type=int, default=10)
    p.add_argument("--pretrain-lr", type=float, default=1e-3)

    p = sub.add_parser("ablation",
                       help="train and evaluate all four model modes")
    _add_train_args(p)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("e2e", help="synthesize, train and evaluate end to end")
    _add_synth_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _cmd_synth(args, out: Path) -> int:
    corpus = stage_synth(_synth_spec(args), args.seed, out)
    print(f"{len(corpus.pairs)} pairs over {corpus.n_music} music tracks "
          f"-> {out / 'corpus'}")
    return EXIT_OK


def _cmd_tagset(args, out: Path) -> int:
    corpus = _load_workspace_corpus(out)
    tagset = stage_tagset(corpus, out)
    print(f"{tagset.size} unified labels -> {out / 'tagset.json'}")
    for tag in tagset.vocab:
        n = sum(1 for v in tagset.label_of_music.values() if v == tag)
        print(f"  {tag}: {n} music tracks")
    return EXIT_OK


def _cmd_features(args, out: Path) -> int:
    corpus = _load_workspace_corpus(out)
    clips = stage_clips(corpus, out)
    n_clips = sum(c.n_clips for c in clips)
    print(f"{n_clips} clips across {len(clips)} pairs -> {out / 'clips.bin'}")
    return EXIT_OK


def _cmd_pretrain(args, out: Path) -> int:
    corpus = _load_workspace_corpus(out)
    tagset = stage_tagset(corpus, out)
    clips = stage_clips(corpus, out)
    cfg = PretrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed)
    stage_pretrain(clips, tagset, cfg, out, clips_content_key(corpus))
    print(f"extractors -> {out / 'extractors.ckpt'}")
    return EXIT_OK


def _prepared(args, out: Path):
    corpus = _load_workspace_corpus(out)
    cfg = _run_cfg(args)
    return prepare_data(corpus, cfg, out), cfg


def _cmd_train(args, out: Path) -> int:
    data, cfg = _prepared(args, out)
    bundle, log = run_training(data, cfg, out)
    report = run_eval(bundle, data.val_feats, cfg.train.mode, out,
                      tag="val_report",
                      paired_attention=cfg.train.paired_attention)
    print(f"model -> {out / 'model.ckpt'} ({len(log)} epochs logged)")
    print(report.table())
    return EXIT_OK


def _cmd_grid(args, out: Path) -> int:
    data, cfg = _prepared(args, out)
    grids = {"margin": args.margins, "lr": args.lrs}
    best_cfg, rows = run_grid(data, cfg, grids, out, args.budget)
    print(f"{len(rows)} cells -> {out / 'grid.json'}")
    print(f"selected: margin={best_cfg.margin} lr={best_cfg.lr}")
    return EXIT_OK


def _cmd_eval(args, out: Path) -> int:
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    if not ckpt.exists():
        raise LoadError(f"no checkpoint at {ckpt}")
    bundle = load_bundle(ckpt)
    mode = args.mode or bundle.config.get("train", {}).get("mode", "SE")
    corpus = _load_workspace_corpus(out)
    cfg = RunConfig(pretrain=PretrainConfig(epochs=args.pretrain_epochs,
                                            lr=args.pretrain_lr,
                                            seed=args.seed),
                    seed=args.seed)
    data = prepare_data(corpus, cfg, out)
    report = run_eval(bundle, data.test_feats, mode, out,
                      paired_attention=args.paired_retrieval)
    print(report.table())
    if args.emit_csv:
        with open(args.emit_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "recall_percent"])
            for k in report.k_values:
                w.writerow([k, report.recalls[k]])
        print(f"csv -> {args.emit_csv}")
    return EXIT_OK


def _cmd_ablation(args, out: Path) -> int:
    data, cfg = _prepared(args, out)
    results = run_ablation(data, cfg, out, seeds=tuple(args.seeds))
    print(f"ablation -> {out / 'ablation.json'}")
    for mode in MODES:
        med = results[mode]["median"]
        row = "  ".join(f"R@{k}={med[k]:6.2f}" for k in sorted(med, key=int))
        print(f"  {mode:5s} {row}")
    return EXIT_OK


def _cmd_e2e(args, out: Path) -> int:
    summary = run_e2e(_run_cfg(args), out)
    recalls = summary["report"]["recalls"]
    print(f"summary -> {out / 'summary.json'}")
    print("  ".join(f"R@{k}={recalls[k]:.2f}"
                    for k in sorted(recalls, key=int)))
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "tagset": _cmd_tagset,
    "features": _cmd_features,
    "pretrain": _cmd_pretrain,
    "train": _cmd_train,
    "grid": _cmd_grid,
    "eval": _cmd_eval,
    "ablation": _cmd_ablation,
    "e2e": _cmd_e2e,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = resolve_out_dir(args.out)
    try:
        return _COMMANDS[args.command](args, out)
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except _VALIDATION_ERRORS as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
