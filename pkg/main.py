#!/usr/bin/env python3
"""
weakmil - Main Entry Point

Weakly supervised detection of visual corruptions in rendered video:
synthesise a weakly labelled corpus, extract segment features, train a
multiple-instance scoring head, tune a false-positive-constrained
threshold and report recall, ROC and per-corruption breakdowns.
"""

import argparse
import asyncio
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

from src.config import (
    BAG_LENGTH,
    FRAME_SIZE,
    HIDDEN_DIMS,
    LOG_FILE,
    RUNS_DATABASE,
    SEED,
    SEGMENT_LENGTH,
    TARGET_FPR,
    load_run_config,
    merge_options,
)
from src.database import RunDatabase
from src.energy import EnergyConfig, energy_score_table
from src.errors import ConfigError, FormatError, WeakMilError
from src.evaluation import GRANULARITIES, evaluate, score_bags, tune_on_table
from src.features import (
    EXTRACTORS,
    FEATURE_DIM,
    SCALER_FILE,
    FeatureScaler,
    extract_bag_features,
    get_extractor,
)
from src.formats import (
    SPLITS,
    BagIndex,
    DatasetManifest,
    load_checkpoint,
    load_features,
    save_checkpoint,
    save_features,
)
from src.model import MilModel
from src.reporters import RunReport, publish_all
from src.rng import SplitMix64
from src.synth import GeneratorConfig, Motion, SceneSpec, generate_dataset, render_base_video
from src.training import (
    MODEL_KINDS,
    BagSet,
    TrainConfig,
    load_resume_state,
    save_resume_state,
    train,
)
from src.video import make_bags

logger = logging.getLogger("weakmil")

BAG_INDEX_FILE = "bags.json"
CHECKPOINT_FILE = "model.wmck"
RESUME_FILE = "resume.npz"


def setup_logging(verbose: bool = False) -> None:
    """Log to stderr (stdout carries reports) and optionally to LOG_FILE."""
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if LOG_FILE:
        LOG_FILE.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(LOG_FILE))

    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def resolve_options(args: argparse.Namespace, section: str, defaults: dict[str, Any],
                    flags: dict[str, Any]) -> dict[str, Any]:
    """Environment defaults < config file section < command-line flags."""
    file_values: dict[str, Any] = {}
    if getattr(args, "config", None):
        data = load_run_config(args.config)
        file_values = dict(data.get(section, {}))
        if "seed" in data and "seed" in defaults and "seed" not in file_values:
            file_values["seed"] = data["seed"]
    return merge_options(defaults, file_values, flags)


def load_bag_set(features_dir: Path, split: str) -> BagSet:
    """Features and bag records of one split of a features directory."""
    features_dir = Path(features_dir)
    index = BagIndex.load(features_dir / BAG_INDEX_FILE)
    if split not in index.splits:
        raise ConfigError(f"{features_dir} has no {split!r} split; found {sorted(index.splits)}")
    records = index.splits[split]
    features = load_features(features_dir / f"{split}.wmil")
    if len(features) != len(records):
        raise FormatError(
            f"{features_dir}: {split}.wmil holds {len(features)} bags, index lists {len(records)}"
        )
    return BagSet(features, records)


def checkpoint_key(path: str) -> str:
    return str(Path(path).resolve())


def read_threshold_file(path: Path) -> float:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"Threshold file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return float(data["threshold"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise FormatError(f"Malformed threshold file {path}: {e}") from e


async def pinned_threshold(checkpoint: str, granularity: str) -> Optional[float]:
    if RUNS_DATABASE is None:
        return None
    async with RunDatabase(RUNS_DATABASE) as db:
        return await db.get_pinned_threshold(checkpoint_key(checkpoint), granularity)


async def report_results(report: RunReport) -> None:
    results = await publish_all(report)
    for reporter, success in results.items():
        logger.debug(f"  {reporter}: {'ok' if success else 'failed'}")
    if not results.get("files", True):
        raise WeakMilError(f"Could not write results to {report.out_dir}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


async def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a weakly labelled synthetic corpus."""
    options = resolve_options(args, "synth", asdict(GeneratorConfig()), {"seed": args.seed})
    config = GeneratorConfig.from_dict(options)
    config.validate()

    manifest = generate_dataset(config, args.out)
    print(f"Wrote {len(manifest.entries)} videos to {args.out}")
    return 0


async def cmd_features(args: argparse.Namespace) -> int:
    """Extract per-segment features for every split of a manifest."""
    defaults = {"extractor": "builtin", "bag_length": BAG_LENGTH,
                "segment_length": SEGMENT_LENGTH, "frame_size": FRAME_SIZE,
                "standardize": True}
    options = resolve_options(args, "features", defaults, {
        "extractor": args.extractor,
        "bag_length": args.bag_length,
        "segment_length": args.segment_length,
        "standardize": args.standardize,
    })

    kwargs: dict[str, Any] = {"bag_len": options["bag_length"], "seg_len": options["segment_length"]}
    if options["extractor"] == "import":
        if not args.sources:
            raise ConfigError("--extractor import needs --from <file.wmil> [<file.wmil> ...]")
        kwargs["sources"] = args.sources
    elif options["extractor"] == "builtin":
        kwargs["frame_size"] = options["frame_size"]
    if options["bag_length"] % options["segment_length"]:
        raise ConfigError(
            f"Segment length {options['segment_length']} must divide bag length {options['bag_length']}"
        )

    manifest = DatasetManifest.load(args.manifest)
    extractor = get_extractor(options["extractor"], **kwargs)
    extractor.validate(manifest)

    present = [s for s in SPLITS if manifest.split(s)]
    extracted = {split: extractor.extract_split(manifest, split) for split in present}

    scaler = None
    if args.scaler:
        scaler = FeatureScaler.load(args.scaler)
    elif options["standardize"]:
        if "train" not in extracted:
            raise ConfigError("Standardising needs a train split; pass --scaler or --no-standardize")
        scaler = FeatureScaler.fit(extracted["train"][0])
    if scaler is not None:
        extracted = {split: (scaler.transform(f), r) for split, (f, r) in extracted.items()}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = BagIndex(options["bag_length"], options["segment_length"])
    for split, (features, records) in extracted.items():
        save_features(out / f"{split}.wmil", features)
        index.splits[split] = records
    index.save(out / BAG_INDEX_FILE)
    if scaler is not None:
        scaler.save(out / SCALER_FILE)

    for split, (features, _) in extracted.items():
        print(f"{split}: {features.shape[0]} bags x {features.shape[1]} segments x {features.shape[2]}")
    return 0


async def cmd_train(args: argparse.Namespace) -> int:
    """Train a Deep MIL or attention model."""
    options = resolve_options(args, "train", asdict(TrainConfig()), {
        "model": args.model,
        "epochs": args.epochs,
        "seed": args.seed,
        "lr": args.lr,
        "optimizer": args.optimizer,
        "dropout": args.dropout,
        "reg_lambda": args.reg_lambda,
        "pairs_per_batch": args.pairs_per_batch,
        "selection_metric": args.selection_metric,
        "target_fpr": args.target_fpr,
    })
    config = TrainConfig.from_dict(options)
    config.validate()

    train_set = load_bag_set(args.features, "train")
    val_set = load_bag_set(args.features, "validation")
    resume = load_resume_state(args.resume) if args.resume else None

    state = train(config, train_set, val_set, resume=resume, stop_after=args.stop_after)

    out = Path(args.out)
    save_checkpoint(out / CHECKPOINT_FILE, state.best_model)
    save_resume_state(out / RESUME_FILE, state)
    await report_results(RunReport(
        command="train",
        model=config.model,
        out_dir=out,
        seed=config.seed,
        checkpoint=checkpoint_key(str(out / CHECKPOINT_FILE)),
        train_log=state.log,
    ))

    print(f"Best epoch {state.best_epoch} ({config.selection_metric} {state.best_metric:.4f}); "
          f"checkpoint {out / CHECKPOINT_FILE}")
    return 0


async def cmd_tune(args: argparse.Namespace) -> int:
    """Tune the detection threshold on clean bags."""
    options = resolve_options(
        args, "tune",
        {"target_fpr": TARGET_FPR, "granularity": "bag", "split": "validation"},
        {"target_fpr": args.target_fpr, "granularity": args.granularity, "split": args.split},
    )
    model = load_checkpoint(args.checkpoint)
    bags = load_bag_set(args.clean, options["split"])

    table = score_bags(model, bags.features, bags.records)
    result = tune_on_table(table, options["target_fpr"], options["granularity"])

    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    await report_results(RunReport(
        command="tune",
        model=model.kind,
        out_dir=out,
        checkpoint=checkpoint_key(args.checkpoint),
        threshold=result,
    ))

    print(f"threshold={result.threshold!r} achieved_fpr={result.achieved_fpr!r} "
          f"n_clean={result.n_clean} granularity={result.granularity}")
    return 0


async def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate one or more checkpoints on a test split."""
    checkpoints = args.checkpoint
    for name, values in (("--threshold", args.threshold), ("--threshold-file", args.threshold_file)):
        if values and len(values) != len(checkpoints):
            raise ConfigError(f"Give {name} once per --checkpoint ({len(checkpoints)} expected)")

    models = [load_checkpoint(c) for c in checkpoints]
    thresholds = []
    for i, checkpoint in enumerate(checkpoints):
        if args.threshold:
            thresholds.append(args.threshold[i])
        elif args.threshold_file:
            thresholds.append(read_threshold_file(args.threshold_file[i]))
        else:
            t = await pinned_threshold(checkpoint, args.granularity)
            if t is None:
                raise ConfigError(
                    f"No threshold for {checkpoint}: pass --threshold, --threshold-file "
                    "or tune it with RUNS_DATABASE set"
                )
            thresholds.append(t)
    bags = load_bag_set(args.test, args.split)

    out = Path(args.out)
    comparison = []
    for i, (checkpoint, model, t) in enumerate(zip(checkpoints, models, thresholds)):
        table = score_bags(model, bags.features, bags.records)
        metrics = evaluate(table, t, model.kind)
        comparison.append((checkpoint, metrics))
        await report_results(RunReport(
            command="eval",
            model=model.kind,
            out_dir=out if len(checkpoints) == 1 else out / f"{i:02d}-{model.kind}",
            checkpoint=checkpoint_key(checkpoint),
            metrics=metrics,
        ))
        print(f"{checkpoint}: model={model.kind} recall_at_fpr={metrics.recall_at_fpr:.4f} "
              f"auc={metrics.auc:.4f} threshold={t!r}")

    await report_results(RunReport(command="compare", model="-", out_dir=out, comparison=comparison))
    return 0


async def cmd_baseline_energy(args: argparse.Namespace) -> int:
    """Tune and evaluate the patch-energy baseline."""
    defaults = asdict(EnergyConfig()) | {
        "target_fpr": TARGET_FPR,
        "granularity": "bag",
        "bag_length": BAG_LENGTH,
        "tune_split": "validation",
        "split": "test",
    }
    options = resolve_options(args, "baseline", defaults, {
        "normalize": True if args.normalize else None,
        "k": args.k,
        "patch": args.patch,
        "window": args.window,
        "bag_length": args.bag_length,
        "target_fpr": args.target_fpr,
        "granularity": args.granularity,
        "tune_split": args.tune_split,
        "split": args.split,
    })
    config = EnergyConfig(**{k: options[k] for k in asdict(EnergyConfig())})
    config.validate()

    manifest = DatasetManifest.load(args.manifest)
    tune_table = energy_score_table(manifest, options["tune_split"], config, options["bag_length"])
    threshold = tune_on_table(tune_table, options["target_fpr"], options["granularity"])
    test_table = energy_score_table(manifest, options["split"], config, options["bag_length"])
    metrics = evaluate(test_table, threshold.threshold, config.tag)

    await report_results(RunReport(
        command="baseline",
        model=config.tag,
        out_dir=Path(args.out),
        metrics=metrics,
        threshold=threshold,
    ))
    print(f"model={config.tag} recall_at_fpr={metrics.recall_at_fpr:.4f} auc={metrics.auc:.4f} "
          f"threshold={threshold.threshold!r}")
    return 0


async def cmd_history(args: argparse.Namespace) -> int:
    """List recent runs from the run history."""
    if RUNS_DATABASE is None:
        raise ConfigError("Run history is disabled; set RUNS_DATABASE")

    async with RunDatabase(RUNS_DATABASE) as db:
        runs = await db.get_recent_runs(args.limit)
        stats = await db.get_stats()

    print(f"Runs: {stats['total_runs']} total, {stats['pinned_thresholds']} pinned thresholds")
    if stats["by_command"]:
        print(f"  By command: {stats['by_command']}")
    for run in runs:
        print(f"  {run.created.isoformat(timespec='seconds')} {run.summary}")
    return 0


async def cmd_bench(args: argparse.Namespace) -> int:
    """Measure end-to-end scoring throughput (features + FC forward)."""
    n_frames = (args.frames // SEGMENT_LENGTH) * SEGMENT_LENGTH
    if n_frames < SEGMENT_LENGTH:
        raise ConfigError(f"--frames must be at least {SEGMENT_LENGTH}")

    rng = SplitMix64(args.seed)
    spec = SceneSpec((FRAME_SIZE, FRAME_SIZE), Motion.RECTANGLES, rng.next_u64())
    video = render_base_video(spec, n_frames, rng.next_u64())
    model = MilModel.initialize([FEATURE_DIM, *HIDDEN_DIMS, 1], rng)

    started = time.perf_counter()
    for bag in make_bags(video, n_frames, SEGMENT_LENGTH):
        scores = model.segment_scores(extract_bag_features(bag))
    elapsed = time.perf_counter() - started

    fps = n_frames / elapsed
    logger.info(f"[bench] {n_frames} frames in {elapsed:.3f}s, {len(scores)} segments scored")
    print(f"frames_per_second={fps:.1f} frames_per_day={fps * 86400:.0f}")
    return 0


# ---------------------------------------------------------------------------
# Command-line interface
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakmil",
        description="Weakly supervised MIL detection of visual corruptions in rendered video",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a weakly labelled synthetic dataset")
    p.add_argument("--config", type=Path, help="JSON run config (uses its 'synth' section)")
    p.add_argument("--out", type=Path, required=True, help="Output dataset directory")
    p.add_argument("--seed", type=int, help=f"Dataset seed (default: {SEED})")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("features", help="Extract per-segment features")
    p.add_argument("--manifest", type=Path, required=True, help="Dataset manifest.json")
    p.add_argument("--out", type=Path, required=True, help="Output features directory")
    p.add_argument("--config", type=Path, help="JSON run config (uses its 'features' section)")
    p.add_argument("--extractor", choices=list(EXTRACTORS.keys()),
                   help="Feature source (default: builtin)")
    p.add_argument("--from", dest="sources", type=Path, nargs="+",
                   help="WMIL file(s) for --extractor import, concatenated in order")
    p.add_argument("--no-standardize", dest="standardize", action="store_const", const=False,
                   help="Keep raw descriptors instead of train-split standardisation")
    p.add_argument("--scaler", type=Path, help="Reuse the scaler.json of another features directory")
    p.add_argument("--bag-length", type=int, help=f"Frames per bag (default: {BAG_LENGTH})")
    p.add_argument("--segment-length", type=int, help=f"Frames per segment (default: {SEGMENT_LENGTH})")
    p.set_defaults(handler=cmd_features)

    defaults = TrainConfig()
    p = sub.add_parser("train", help="Train a MIL scoring model")
    p.add_argument("--features", type=Path, required=True, help="Features directory")
    p.add_argument("--out", type=Path, required=True, help="Output checkpoint directory")
    p.add_argument("--config", type=Path, help="JSON run config (uses its 'train' section)")
    p.add_argument("--model", choices=MODEL_KINDS, help=f"Model kind (default: {defaults.model})")
    p.add_argument("--seed", type=int, help=f"Training seed (default: {defaults.seed})")
    p.add_argument("--epochs", type=int, help=f"Epochs (default: {defaults.epochs})")
    p.add_argument("--optimizer", choices=["adagrad", "adam"],
                   help="Optimizer (default: adagrad for deep-mil, adam for attention)")
    p.add_argument("--lr", type=float, help="Learning rate (default: 0.1 adagrad, 0.001 adam)")
    p.add_argument("--dropout", type=float, help=f"Dropout rate (default: {defaults.dropout})")
    p.add_argument("--reg-lambda", type=float,
                   help=f"Weight decay coefficient (default: {defaults.reg_lambda})")
    p.add_argument("--pairs-per-batch", type=int,
                   help=f"Corrupted/normal pairs per batch (default: {defaults.pairs_per_batch})")
    p.add_argument("--selection-metric", choices=["auc", "recall"],
                   help=f"Validation metric for model selection (default: {defaults.selection_metric})")
    p.add_argument("--target-fpr", type=float,
                   help=f"FPR for validation recall (default: {defaults.target_fpr})")
    p.add_argument("--resume", type=Path, help="Resume from a saved resume.npz")
    p.add_argument("--stop-after", type=int, help="Stop after this epoch")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("tune", help="Tune a threshold on clean bags")
    p.add_argument("--checkpoint", required=True, help="WMCK checkpoint")
    p.add_argument("--clean", type=Path, required=True, help="Features directory with clean bags")
    p.add_argument("--config", type=Path, help="JSON run config (uses its 'tune' section)")
    p.add_argument("--target-fpr", type=float, help=f"Target false-positive rate (default: {TARGET_FPR})")
    p.add_argument("--granularity", choices=GRANULARITIES, help="FPR unit (default: bag)")
    p.add_argument("--split", choices=SPLITS, help="Split to tune on (default: validation)")
    p.add_argument("--out", type=Path, help="Where to write threshold.json (default: checkpoint dir)")
    p.set_defaults(handler=cmd_tune)

    p = sub.add_parser("eval", help="Evaluate checkpoints on a test split")
    p.add_argument("--checkpoint", action="append", required=True,
                   help="WMCK checkpoint (repeat to compare models)")
    p.add_argument("--threshold", type=float, action="append", help="Threshold per checkpoint")
    p.add_argument("--threshold-file", type=Path, action="append",
                   help="threshold.json per checkpoint")
    p.add_argument("--granularity", choices=GRANULARITIES, default="bag",
                   help="Granularity of a pinned threshold (default: bag)")
    p.add_argument("--test", type=Path, required=True, help="Features directory")
    p.add_argument("--split", choices=SPLITS, default="test", help="Split to evaluate (default: test)")
    p.add_argument("--out", type=Path, required=True, help="Output report directory")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("baseline", help="Unsupervised baselines")
    baselines = p.add_subparsers(dest="baseline", required=True)
    e = baselines.add_parser("energy", help="Patch-energy baseline")
    e.add_argument("--manifest", type=Path, required=True, help="Dataset manifest.json")
    e.add_argument("--out", type=Path, required=True, help="Output report directory")
    e.add_argument("--config", type=Path, help="JSON run config (uses its 'baseline' section)")
    e.add_argument("--normalize", action="store_true", help="Normalise by the preceding frames")
    e.add_argument("--k", type=int, help="Lowest-energy patches averaged (default: 3)")
    e.add_argument("--patch", type=int, help="Patch size in pixels (default: 32)")
    e.add_argument("--window", type=int, help="Normalisation window in frames (default: 3)")
    e.add_argument("--bag-length", type=int, help=f"Frames per bag (default: {BAG_LENGTH})")
    e.add_argument("--target-fpr", type=float, help=f"Target false-positive rate (default: {TARGET_FPR})")
    e.add_argument("--granularity", choices=GRANULARITIES, help="FPR unit (default: bag)")
    e.add_argument("--tune-split", choices=SPLITS, help="Split to tune on (default: validation)")
    e.add_argument("--split", choices=SPLITS, help="Split to evaluate (default: test)")
    e.set_defaults(handler=cmd_baseline_energy)

    p = sub.add_parser("history", help="List recent runs (needs RUNS_DATABASE)")
    p.add_argument("--limit", type=int, default=20, help="Runs to show (default: 20)")
    p.set_defaults(handler=cmd_history)

    p = sub.add_parser("bench", help="Measure scoring throughput")
    p.add_argument("--frames", type=int, default=512, help="Frames to score (default: 512)")
    p.add_argument("--seed", type=int, default=SEED, help=f"Synthetic video seed (default: {SEED})")
    p.set_defaults(handler=cmd_bench)

    return parser


def format_error(error: BaseException, code: int) -> str:
    message = str(error).replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    return f'error code={code} type={type(error).__name__} message="{message}"'


def cli(argv: Optional[list[str]] = None) -> int:
    """Command-line interface."""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)

    try:
        return asyncio.run(args.handler(args))
    except WeakMilError as e:
        logger.debug("Command failed", exc_info=True)
        print(format_error(e, e.exit_code), file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        print(format_error(e, 1), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(cli())
