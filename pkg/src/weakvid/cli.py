"""Command-line entry point: ``weakvid <subcommand> ...``.

Subcommands talk to each other only through files. Every output embeds the
arguments and seeds that produced it (inline for JSON artifacts, in a JSON
sidecar for fixed-format CSV/JSONL files), and reruns with the same inputs
rewrite byte-identical files.

Exit codes: 0 success, 1 pipeline error (a single ``error: {...}`` JSON line
on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .classic_ml import ALGORITHMS, DEFAULT_HYPERPARAMETERS, ClassifierSpec, TrainedModel, cross_validate, fit, predict
from .datasetgen import DatasetVariant, build_dataset, dataset_stats, load_dataset, save_dataset
from .errors import WeakVidError
from .eval_report import evaluate_predictions, records_from_result, render_report, save_confusion_png
from .features import FeatureConfig, extract_features, read_feature_csv, write_feature_csv
from .ingest import best_detections, read_detections, read_manifest, write_detections
from .splitting import FoldAssignment, SplitAssignment, kfold_frame_split, video_level_split

log = logging.getLogger("weakvid")

SPLIT_PARTS = ("train", "val", "test")


# ---------------------------------------------------------------- helpers

def _dump(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n", encoding="utf-8")


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _command_record(args: argparse.Namespace) -> dict:
    """Arguments of this invocation, for embedding in artifacts."""
    doc = {"tool": "weakvid", "version": __version__, "subcommand": args.command}
    for key, value in sorted(vars(args).items()):
        if key in ("command", "handler", "verbose"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, DatasetVariant):
            value = value.name
        elif isinstance(value, (list, tuple)):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        doc[key] = value
    return doc


def _parse_value(text: str):
    low = text.lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _parse_params(items: Sequence[str]) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = _parse_value(value.strip())
    return out


def _ratios(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ratios must be comma-separated numbers, got {text!r}") from None
    if len(values) != 3:
        raise argparse.ArgumentTypeError("need exactly three ratios (train,val,test)")
    return values


def _existing(text: str) -> Path:
    path = Path(text)
    if not path.exists():
        raise argparse.ArgumentTypeError(f"no such file or directory: {text}")
    return path


def _variant(text: str) -> DatasetVariant:
    try:
        return DatasetVariant.parse(text)
    except WeakVidError as exc:
        raise argparse.ArgumentTypeError(exc.args[0]) from None


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _dataset_name(table) -> str:
    prov = (table.config or {}).get("provenance", {})
    return prov.get("variant", "unknown")


def _rows_by_split(video_ids: Sequence[str], split: SplitAssignment) -> dict:
    """Row indices per split part; rows of videos absent from the split are skipped."""
    parts = {name: [] for name in SPLIT_PARTS}
    missing = 0
    for i, vid in enumerate(video_ids):
        part = split.split_of.get(vid)
        if part is None:
            missing += 1
        else:
            parts[part].append(i)
    if missing:
        log.warning("%d rows belong to videos absent from the split; they are ignored", missing)
    return {k: np.asarray(v, dtype=np.int64) for k, v in parts.items()}, missing


def _part_metrics(true, pred, class_list):
    cm, m = evaluate_predictions(true, pred, class_list)
    return cm, m.to_dict()


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> str:
    from .synth import SynthConfig, color_blob_config, generate_corpus, load_synth_config

    overrides = _parse_params(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    for key in ("webcam_beta", "camcorder_beta"):
        if isinstance(overrides.get(key), str):
            overrides[key] = tuple(float(v) for v in overrides[key].split(","))
    if isinstance(overrides.get("videos_per_class"), str):
        overrides["videos_per_class"] = tuple(int(v) for v in overrides["videos_per_class"].split(","))
    try:
        if args.config is not None:
            cfg = load_synth_config(args.config, **overrides)
        elif args.preset == "color-blob":
            cfg = color_blob_config(**overrides)
        else:
            cfg = SynthConfig(**overrides)
    except TypeError as exc:
        raise argparse.ArgumentTypeError(f"bad synth setting: {exc}") from None
    corpus = generate_corpus(cfg, args.output)
    n_frames = sum(v.frame_count for v in corpus.videos)
    return (f"synth: {len(corpus.videos)} videos, {n_frames} frames, {len(corpus.detections)} detections, "
            f"{cfg.n_classes} classes (seed {cfg.seed}) -> {args.output}")


def cmd_ingest(args) -> str:
    records = read_detections(args.detections)
    best = best_detections(records)
    if args.manifest is not None:
        known = {v.video_id for v in read_manifest(args.manifest)}
        unknown = sorted(set(best) - known)
        if unknown:
            from .errors import UnknownVideo

            raise UnknownVideo(unknown[0])
    kept = [best[vid][f] for vid in sorted(best) for f in sorted(best[vid])]
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_detections(args.output, kept)
    _dump(args.output.with_name(args.output.name + ".json"),
          {"artifact": "best_detections", "n_input": len(records), "n_kept": len(kept),
           "rule": "highest score per (video, frame); earliest record wins ties",
           "command": _command_record(args)})
    return f"ingest: {len(records)} detections -> {len(kept)} best-per-frame across {len(best)} videos -> {args.output}"


def cmd_build(args) -> str:
    variant = args.variant
    manifest = read_manifest(args.manifest)
    best = best_detections(read_detections(args.detections))
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        samples = build_dataset(manifest, best, variant)
    args.output.mkdir(parents=True, exist_ok=True)
    path = args.output / "dataset.json"
    save_dataset(path, samples, variant, {"command": _command_record(args)})
    st = dataset_stats(samples)
    return (f"build: {variant.name}: {st.total} samples, {len(st.per_class)} classes, "
            f"per-class range [{st.min_per_class}, {st.max_per_class}] -> {path}")


def cmd_split(args) -> str:
    if args.mode == "video":
        if args.manifest is not None:
            videos = read_manifest(args.manifest)
        else:
            samples, _ = load_dataset(args.dataset)
            seen = {}
            for s in samples:
                seen.setdefault(s.video_id, s.label)
            videos = [argparse.Namespace(video_id=v, weak_label=lab) for v, lab in seen.items()]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            split = video_level_split(videos, args.ratios, args.seed)
        doc = json.loads(split.to_json())
        doc["command"] = _command_record(args)
        out = args.output or Path("split.json")
        _dump(out, doc)
        counts = {p: len(split.videos(p)) for p in SPLIT_PARTS}
        return (f"split: video-level {counts['train']}/{counts['val']}/{counts['test']} videos "
                f"(train/val/test, seed {args.seed}) -> {out}")
    if args.dataset is None:
        raise argparse.ArgumentTypeError("--mode kfold needs --dataset")
    samples, _ = load_dataset(args.dataset)
    folds = kfold_frame_split(samples, args.k, args.seed)
    doc = json.loads(folds.to_json())
    doc["command"] = _command_record(args)
    out = args.output or Path("folds.json")
    _dump(out, doc)
    sizes = [len(f) for f in folds.folds()]
    return f"split: {args.k}-fold over {len(samples)} samples, fold sizes {min(sizes)}..{max(sizes)} (seed {args.seed}) -> {out}"


def cmd_features(args) -> str:
    cfg = FeatureConfig(args.hist_bins, args.hist_mode, args.glcm_levels, args.hu_log)
    samples, variant = load_dataset(args.dataset)
    X = extract_features(samples, cfg, threads=args.threads)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(args.output, samples, X, cfg,
                      {"variant": variant.name, "command": _command_record(args)})
    return f"features: {X.shape[0]} samples x {X.shape[1]} features ({variant.name}) -> {args.output}"


def _spec_from_args(args) -> ClassifierSpec:
    return ClassifierSpec(args.algo, _parse_params(args.param), args.seed)


def cmd_fit(args) -> str:
    spec = _spec_from_args(args)
    table = read_feature_csv(args.features)
    split = SplitAssignment.from_json(Path(args.split).read_text(encoding="utf-8"))
    rows, missing = _rows_by_split(table.video_ids, split)
    labels = np.asarray(table.labels, dtype=object)
    model = fit(spec, table.X[rows["train"]], list(labels[rows["train"]]))
    args.output.mkdir(parents=True, exist_ok=True)
    model.save(args.output / "model.json")
    parts = {}
    for part in SPLIT_PARTS:
        idx = rows[part]
        if len(idx) == 0:
            continue
        pred = predict(model, table.X[idx])
        cm, parts[part] = _part_metrics(list(labels[idx]), pred, model.class_list)
        (args.output / f"confusion_{part}.csv").write_text(cm.to_csv(), encoding="utf-8")
        if args.png and part == "test":
            save_confusion_png(cm, args.output / "confusion_test.png", f"{args.name or spec.algorithm} test")
    doc = {
        "model": args.name or spec.algorithm,
        "family": "classic",
        "dataset": _dataset_name(table),
        "protocol": "split",
        "spec": spec.to_dict(),
        "class_list": model.class_list,
        "split": {"seed": split.seed, "ratios": list(split.ratios), "rows_outside_split": missing},
        "features": {"path": str(args.features), "descriptor": (table.config or {}).get("descriptor")},
        "parts": parts,
        "command": _command_record(args),
    }
    _dump(args.output / "result.json", doc)
    summary = ", ".join(f"{p} {parts[p]['accuracy']:.3f}" for p in SPLIT_PARTS if p in parts)
    return f"fit: {spec.algorithm} on {doc['dataset']}: {summary} -> {args.output}"


def cmd_cross_validate(args) -> str:
    spec = _spec_from_args(args)
    table = read_feature_csv(args.features)
    if args.folds is not None:
        folds = FoldAssignment.from_json(Path(args.folds).read_text(encoding="utf-8"))
    else:
        folds = kfold_frame_split(table.sample_ids, args.k, args.fold_seed, labels=table.labels)
    try:
        fold_index = [folds.fold_of[sid] for sid in table.sample_ids]
    except KeyError as exc:
        from .errors import SplitError

        raise SplitError(f"sample {exc.args[0]!r} has no fold") from None
    res = cross_validate(spec, table.X, table.labels, fold_index)
    doc = {
        "model": args.name or spec.algorithm,
        "family": "classic",
        "dataset": _dataset_name(table),
        "protocol": "cv",
        "spec": spec.to_dict(),
        "folds": {"k": folds.k, "seed": folds.seed, "stratified": folds.stratified,
                  "source": str(args.folds) if args.folds is not None else "generated"},
        "features": {"path": str(args.features), "descriptor": (table.config or {}).get("descriptor")},
        "cv": {"mean_accuracy": res.mean_accuracy, "fold_accuracies": res.fold_accuracies, "notes": res.notes},
        "command": _command_record(args),
    }
    _dump(args.output, doc)
    return f"cross-validate: {spec.algorithm} on {doc['dataset']}: {folds.k}-fold mean accuracy {res.mean_accuracy:.4f} -> {args.output}"


def _split_samples(samples, split: SplitAssignment) -> dict:
    parts = {name: [] for name in SPLIT_PARTS}
    for s in samples:
        part = split.split_of.get(s.video_id)
        if part is not None:
            parts[part].append(s)
    return parts


def cmd_train_nn(args) -> str:
    import torch

    from .neural import TrainConfig, evaluate_samples, save_checkpoint, train_on_samples

    torch.set_num_threads(args.threads)
    cfg = TrainConfig(epochs=args.epochs, base_lr=args.lr, lr_decay=args.lr_decay, lr_step=args.lr_step,
                      batch_size=args.batch_size, loss_reduction=args.reduction, mode=args.mode, loss=args.loss,
                      weight_mode=args.weight_mode, momentum=args.momentum, seed=args.seed,
                      input_size=args.input_size, augment=not args.no_augment,
                      widths=tuple(int(w) for w in args.widths.split(",")))
    samples, variant = load_dataset(args.dataset)
    split = SplitAssignment.from_json(Path(args.split).read_text(encoding="utf-8"))
    parts = _split_samples(samples, split)
    class_list = sorted({s.label for s in samples})

    def progress(entry):
        log.info("epoch %d lr %g loss %.4f val_acc %.4f", entry.epoch, entry.lr, entry.train_loss, entry.val_acc)

    result = train_on_samples(parts["train"], parts["val"], cfg, class_list, progress)
    save_checkpoint(args.output, result, cfg, {"dataset": variant.name, "command": _command_record(args)})
    metrics = {}
    for part in SPLIT_PARTS:
        if not parts[part]:
            continue
        pred = evaluate_samples(result.net, parts[part], class_list, cfg.input_size)
        cm, metrics[part] = _part_metrics([s.label for s in parts[part]], pred, class_list)
        (args.output / f"confusion_{part}.csv").write_text(cm.to_csv(), encoding="utf-8")
    name = args.name or f"CNN-{cfg.mode}-{cfg.loss}"
    _dump(args.output / "result.json", {
        "model": name,
        "family": "neural",
        "dataset": variant.name,
        "protocol": "split",
        "config": asdict(cfg),
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
        "split": {"seed": split.seed, "ratios": list(split.ratios)},
        "parts": metrics,
        "command": _command_record(args),
    })
    test = metrics.get("test", {}).get("accuracy")
    tail = f", test {test:.3f}" if test is not None else ""
    return (f"train-nn: {name} on {variant.name}: best val {result.best_val_acc:.3f} "
            f"at epoch {result.best_epoch}{tail} -> {args.output}")


def cmd_eval(args) -> str:
    split = SplitAssignment.from_json(Path(args.split).read_text(encoding="utf-8")) if args.split else None
    if args.model is not None:
        if args.features is None:
            raise argparse.ArgumentTypeError("--model needs --features")
        model = TrainedModel.load(args.model)
        table = read_feature_csv(args.features)
        idx = np.arange(len(table.sample_ids))
        if split is not None:
            idx = _rows_by_split(table.video_ids, split)[0][args.part]
        ids = [table.sample_ids[i] for i in idx]
        true = [table.labels[i] for i in idx]
        pred = predict(model, table.X[idx]) if len(idx) else []
        class_list = model.class_list
        source = {"model": str(args.model), "features": str(args.features), "spec": model.spec.to_dict()}
    else:
        if args.checkpoint is None or args.dataset is None:
            raise argparse.ArgumentTypeError("need --model/--features or --checkpoint/--dataset")
        from .neural import evaluate_samples, load_checkpoint

        net, doc = load_checkpoint(args.checkpoint)
        samples, _ = load_dataset(args.dataset)
        if split is not None:
            samples = _split_samples(samples, split)[args.part]
        ids = [s.sample_id for s in samples]
        true = [s.label for s in samples]
        class_list = doc["class_list"]
        pred = evaluate_samples(net, samples, class_list, doc["config"]["input_size"]) if samples else []
        source = {"checkpoint": str(args.checkpoint), "dataset": str(args.dataset), "config": doc["config"]}
    cm, m = _part_metrics(true, pred, class_list)
    args.output.mkdir(parents=True, exist_ok=True)
    with open(args.output / "predictions.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id,true,pred\n")
        for sid, t, p in zip(ids, true, pred):
            fh.write(f"{sid},{t},{p}\n")
    (args.output / "confusion.csv").write_text(cm.to_csv(), encoding="utf-8")
    if args.png:
        save_confusion_png(cm, args.output / "confusion.png")
    _dump(args.output / "metrics.json", {"part": args.part if split is not None else "all", "metrics": m,
                                         "source": source, "command": _command_record(args)})
    return (f"eval: {m['total']} samples: accuracy {m['accuracy']:.4f}, "
            f"mean class accuracy {m['mean_class_accuracy']:.4f} -> {args.output}")


def cmd_report(args) -> str:
    records = []
    for path in args.results:
        records.extend(records_from_result(_load_json(path)))
    if not records:
        from .errors import ReportError

        raise ReportError("no result records found in the given files")
    text, csv_text = render_report(records)
    args.output.mkdir(parents=True, exist_ok=True)
    (args.output / "report.txt").write_text(text, encoding="utf-8")
    (args.output / "report.csv").write_text(csv_text, encoding="utf-8")
    _dump(args.output / "report.json", {"inputs": [str(p) for p in args.results], "n_records": len(records),
                                        "command": _command_record(args)})
    return f"report: {len(records)} values from {len(args.results)} result files -> {args.output}"


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weakvid", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
        return p

    p = add("synth", cmd_synth, "Generate a synthetic corpus (frames, manifest.csv, detections.jsonl).")
    p.add_argument("-o", "--output", type=Path, required=True, help="output corpus directory")
    p.add_argument("--config", type=_existing, help="INI file with a [synth] section of key = value pairs")
    p.add_argument("--preset", choices=("default", "color-blob"), default="default",
                   help="base configuration when --config is absent")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one synth setting (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="corpus seed (default: from config, else 0)")

    p = add("ingest", cmd_ingest, "Reduce a detections file to the best detection per frame.")
    p.add_argument("--detections", type=_existing, required=True, help="detections JSONL")
    p.add_argument("--manifest", type=_existing, help="optional manifest CSV to validate video ids against")
    p.add_argument("-o", "--output", type=Path, required=True, help="output JSONL of best detections")

    p = add("build", cmd_build, "Materialize one dataset variant as <output>/dataset.json.")
    p.add_argument("--variant", type=_variant, required=True, help="variant selector such as roi,s0.5 or noroi,s0")
    p.add_argument("--manifest", type=_existing, required=True, help="video manifest CSV")
    p.add_argument("--detections", type=_existing, required=True, help="detections JSONL (raw or already reduced)")
    p.add_argument("-o", "--output", type=Path, required=True, help="output dataset directory")

    p = add("split", cmd_split, "Write a video-level split or a frame-level k-fold assignment.")
    p.add_argument("--mode", choices=("video", "kfold"), required=True, help="split scheme")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--manifest", type=_existing, help="manifest CSV (video mode)")
    src.add_argument("--dataset", type=_existing, help="dataset.json (kfold mode, or video mode)")
    p.add_argument("--ratios", type=_ratios, default=(0.6, 0.2, 0.2), help="train,val,test (default 0.6,0.2,0.2)")
    p.add_argument("--k", type=int, default=10, help="number of folds (kfold mode, default 10)")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed (default 0)")
    p.add_argument("-o", "--output", type=Path, help="output JSON (default split.json or folds.json)")

    p = add("features", cmd_features, "Extract Hu + Haralick + color-histogram features to CSV.")
    p.add_argument("--dataset", type=_existing, required=True, help="dataset.json")
    p.add_argument("-o", "--output", type=Path, required=True, help="output CSV (a .json sidecar is written next to it)")
    p.add_argument("--hist-bins", type=_positive, default=8, help="bins per HSV channel (default 8)")
    p.add_argument("--hist-mode", choices=("joint", "per-channel"), default="joint", help="histogram layout")
    p.add_argument("--glcm-levels", type=int, default=32, help="gray levels for the co-occurrence matrix (default 32)")
    p.add_argument("--hu-log", action="store_true", help="apply -sign(h)*log10|h| to Hu moments")
    p.add_argument("--threads", type=_positive, default=1, help="worker threads (default 1)")

    def classifier_args(p):
        p.add_argument("--features", type=_existing, required=True, help="feature CSV")
        p.add_argument("--algo", type=str.upper, choices=ALGORITHMS, required=True, help="classifier")
        p.add_argument("--param", action="append", metavar="KEY=VALUE",
                       help="hyperparameter override (repeatable); defaults: " +
                       "; ".join(f"{a} {DEFAULT_HYPERPARAMETERS[a]}" for a in ALGORITHMS))
        p.add_argument("--seed", type=int, default=0, help="classifier seed (default 0)")
        p.add_argument("--name", help="model name used in reports (default: the algorithm)")

    p = add("fit", cmd_fit, "Train a classifier on the train videos and score train/val/test.")
    classifier_args(p)
    p.add_argument("--split", type=_existing, required=True, help="video-level split JSON")
    p.add_argument("--png", action="store_true", help="also render the test confusion matrix as PNG")
    p.add_argument("-o", "--output", type=Path, required=True, help="output directory (model.json, result.json)")

    p = add("cross-validate", cmd_cross_validate, "Frame-level k-fold cross-validation of a classifier.")
    classifier_args(p)
    p.add_argument("--folds", type=_existing, help="fold JSON from 'split --mode kfold' (default: generate)")
    p.add_argument("--k", type=int, default=10, help="folds when generating (default 10)")
    p.add_argument("--fold-seed", type=int, default=0, help="fold shuffle seed when generating (default 0)")
    p.add_argument("-o", "--output", type=Path, required=True, help="output result JSON")

    p = add("train-nn", cmd_train_nn, "Train the small CNN on the train videos, selecting on val.")
    p.add_argument("--dataset", type=_existing, required=True, help="dataset.json")
    p.add_argument("--split", type=_existing, required=True, help="video-level split JSON")
    p.add_argument("--mode", choices=("fine_tune", "feature_extractor"), default="fine_tune")
    p.add_argument("--loss", choices=("ce", "weighted_ce"), default="ce")
    p.add_argument("--weight-mode", choices=("frequency", "inverse"), default="frequency",
                   help="class weights for weighted_ce (default frequency: n_classes*n_y/n)")
    p.add_argument("--epochs", type=_positive, default=100)
    p.add_argument("--lr", type=float, default=1e-3, help="base learning rate (default 1e-3)")
    p.add_argument("--lr-decay", type=float, default=0.1, help="step decay factor (default 0.1)")
    p.add_argument("--lr-step", type=_positive, default=20, help="epochs per decay step (default 20)")
    p.add_argument("--batch-size", type=_positive, default=64)
    p.add_argument("--reduction", choices=("sum", "mean"), default="sum", help="batch loss reduction")
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--input-size", type=_positive, default=224, help="network input side in pixels")
    p.add_argument("--widths", default="16,32,64,128", help="conv block widths (comma-separated)")
    p.add_argument("--no-augment", action="store_true", help="disable random resized crop and flip")
    p.add_argument("--seed", type=int, default=0, help="init, batch-order and augmentation seed (default 0)")
    p.add_argument("--threads", type=_positive, default=1, help="torch intra-op threads (default 1)")
    p.add_argument("--name", help="model name used in reports")
    p.add_argument("-o", "--output", type=Path, required=True, help="checkpoint directory")

    p = add("eval", cmd_eval, "Score a saved model on features (classic) or a dataset (neural).")
    p.add_argument("--model", type=_existing, help="model.json from fit")
    p.add_argument("--features", type=_existing, help="feature CSV (with --model)")
    p.add_argument("--checkpoint", type=_existing, help="checkpoint directory from train-nn")
    p.add_argument("--dataset", type=_existing, help="dataset.json (with --checkpoint)")
    p.add_argument("--split", type=_existing, help="restrict to one part of a video-level split")
    p.add_argument("--part", choices=SPLIT_PARTS, default="test", help="split part (default test)")
    p.add_argument("--png", action="store_true", help="also render confusion.png")
    p.add_argument("-o", "--output", type=Path, required=True, help="output directory")

    p = add("report", cmd_report, "Render model x dataset tables from result JSON files.")
    p.add_argument("results", type=_existing, nargs="+", help="result JSON files from fit/cross-validate/train-nn")
    p.add_argument("-o", "--output", type=Path, required=True, help="output directory (report.txt, report.csv)")
    return parser


def _error_line(exc: BaseException, module: str) -> str:
    message = str(exc.args[0]) if isinstance(exc, WeakVidError) and exc.args else str(exc)
    return "error: " + json.dumps({"module": module, "error": type(exc).__name__, "message": message})


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        summary = args.handler(args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(_error_line(exc, "cli"), file=sys.stderr)
        return 2
    except WeakVidError as exc:
        print(_error_line(exc, exc.module), file=sys.stderr)
        return 1
    except OSError as exc:
        print(_error_line(exc, "cli"), file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
