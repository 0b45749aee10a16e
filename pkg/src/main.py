"""Command-line entry point for maskmend."""

import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, NoReturn, Optional, Sequence

from pydantic import ValidationError

from config.settings import load_pipeline_config, settings
from exceptions import ConfigError, ManifestError, MaskmendError
from models.pipeline_config import PipelineConfig
from models.specs import (
    DEFAULT_LEARNING_RATE,
    EnsembleMethod,
    EnsembleSpec,
    NoiseKind,
    NoiseSpec,
    RelabelSpec,
    SyntheticCorpusSpec,
    TrainConfig,
)
from models.trace import TrainingTrace
from services import codecs
from services.corpus import MANIFEST_NAME, generate_corpus
from services.ensemble_engine import build_ensemble
from services.epoch_detector import OnlineEpochDetector, detect_relabel_epoch
from services.learner import PixelClassifier, fit, load_model, save_model
from services.metrics import evaluate_manifest
from services.noise_synth import corrupt_manifest
from services.pipeline import compare_methods, load_split, run_pipeline
from services.relabel import relabel_with_audit
from services.uncertainty import aleatoric_map, epistemic_map
from utils.logger import logger, setup_logger


def cmd_generate(args: argparse.Namespace) -> int:
    spec = SyntheticCorpusSpec(
        train_count=args.train, test_count=args.test, size=args.size, seed=args.seed
    )
    generate_corpus(spec, args.out)
    print(Path(args.out) / MANIFEST_NAME)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = NoiseSpec(
        kind=NoiseKind(args.kind), vertex_count=args.vertices, samples_per_segment=args.samples
    )
    manifest = corrupt_manifest(codecs.read_manifest(args.manifest), spec, args.out)
    codecs.write_manifest(manifest, Path(args.out) / MANIFEST_NAME)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    train_cfg = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        dropout_rate=args.dropout,
        seed=args.seed,
    )
    entries = codecs.read_manifest(args.manifest).train
    if not entries:
        raise ManifestError(f"{args.manifest}: no training entries")
    train = load_split(entries, require_clean=args.clean)
    masks = train.clean if args.clean else train.noisy
    model = fit(PixelClassifier.from_config(train_cfg), list(zip(train.images, masks)), train_cfg)
    save_model(model, args.out)
    logger.info(f"Model written to {args.out}")
    return 0


def cmd_ensemble(args: argparse.Namespace) -> int:
    models = [load_model(path) for path in args.model.split(",") if path]
    spec = EnsembleSpec(method=EnsembleMethod(args.method), n=args.n, base_seed=args.seed)
    ensemble = build_ensemble(spec, models, codecs.read_image(args.image), workers=settings.WORKERS)
    codecs.write_ensemble(ensemble, args.out)
    return 0


def cmd_uncertainty(args: argparse.Namespace) -> int:
    ensemble = codecs.read_ensemble(args.ens)
    codecs.write_uncertainty(aleatoric_map(ensemble), args.out)
    if args.epistemic:
        codecs.write_uncertainty(epistemic_map(ensemble), args.epistemic)
    return 0


def cmd_relabel(args: argparse.Namespace) -> int:
    spec = RelabelSpec(delta=args.delta, fill_holes=not args.no_fill)
    outcome = relabel_with_audit(
        codecs.read_mask(args.noisy), codecs.read_uncertainty(args.umap), spec
    )
    codecs.write_mask(outcome.mask, args.out)
    logger.info(f"Flipped {outcome.flipped_fraction:.2%} of pixels, filled {outcome.filled}")
    return 0


def _online_epoch(trace: TrainingTrace, warmup: int, patience: int) -> Optional[int]:
    detector = OnlineEpochDetector(warmup, patience)
    for record in trace:
        fired = detector.observe(record)
        if fired is not None:
            return fired
    return None


def cmd_detect_epoch(args: argparse.Namespace) -> int:
    trace = codecs.read_trace(args.trace)
    if args.online:
        epoch = _online_epoch(trace, args.warmup, args.patience)
        print("" if epoch is None else epoch)
        return 0
    print(detect_relabel_epoch(trace, args.warmup))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_manifest(load_model(args.model), codecs.read_manifest(args.manifest))
    row = [repr(report.d_clean), repr(report.d_noisy)]
    if args.out:
        codecs.write_table(args.out, ["d_clean", "d_noisy"], [row])
    print("d_clean,d_noisy")
    print(",".join(row))
    return 0


def _pipeline_overrides(args: argparse.Namespace) -> Dict[str, object]:
    return {name: getattr(args, name) for name in PipelineConfig.model_fields}


def cmd_pipeline(args: argparse.Namespace) -> int:
    result = run_pipeline(load_pipeline_config(args.config, _pipeline_overrides(args)))
    print(result.report.outcome)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = load_pipeline_config(args.config, _pipeline_overrides(args))
    for row in compare_methods(cfg):
        print(",".join(row.row()))
    return 0


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value or YAML config file")
    for name, info in PipelineConfig.model_fields.items():
        flag = "--" + name.replace("_", "-")
        if info.annotation is bool:
            parser.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        else:
            parser.add_argument(flag, dest=name, default=None, help=f"default: {info.default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskmend", description="Noisy mask corruption, detection and relabeling toolkit"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic blob corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--train", type=int, default=100)
    p.add_argument("--test", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("synth", help="corrupt the clean masks of a manifest")
    p.add_argument("--kind", choices=[k.value for k in NoiseKind], required=True)
    p.add_argument("--vertices", type=int, required=True)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--in", dest="manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("train", help="train the reference learner on a manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=settings.DEFAULT_EPOCHS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--clean", action="store_true", help="train on clean instead of noisy masks")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("ensemble", help="build a prediction ensemble for one image")
    p.add_argument("--method", choices=[m.value for m in EnsembleMethod], required=True)
    p.add_argument("-n", type=int, default=settings.DEFAULT_ENSEMBLE_SIZE)
    p.add_argument("--model", required=True, help="model file, or comma-separated files for de")
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_ensemble)

    p = sub.add_parser("uncertainty", help="aleatoric map of an ensemble")
    p.add_argument("--ens", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--epistemic", type=Path, help="also write the between-member variance")
    p.set_defaults(handler=cmd_uncertainty)

    p = sub.add_parser("relabel", help="flip uncertain labels and fill holes")
    p.add_argument("--noisy", type=Path, required=True)
    p.add_argument("--umap", type=Path, required=True)
    p.add_argument("--delta", type=float, default=settings.DEFAULT_DELTA)
    p.add_argument("--no-fill", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_relabel)

    p = sub.add_parser("detect-epoch", help="relabel epoch of a trace CSV")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--online", action="store_true", help="use the patience rule")
    p.add_argument("--patience", type=int, default=2)
    p.set_defaults(handler=cmd_detect_epoch)

    p = sub.add_parser("eval", help="test-split Dice against clean and noisy masks")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("pipeline", help="full detection-and-relabeling run")
    _add_pipeline_flags(p)
    p.set_defaults(handler=cmd_pipeline)

    p = sub.add_parser("compare", help="pipeline once per ensemble method")
    _add_pipeline_flags(p)
    p.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments and dispatch to the subcommand handler."""
    args = build_parser().parse_args(argv)
    setup_logger("DEBUG" if args.verbose else settings.LOG_LEVEL, settings.LOG_DIR or None)
    handler: Callable[[argparse.Namespace], int] = args.handler
    return handler(args)


def run(argv: Optional[List[str]] = None) -> NoReturn:
    """Run the CLI with proper error handling.

    Raises:
        SystemExit: 2 on configuration errors, 1 on any other maskmend error
    """
    try:
        code = main(argv)
    except KeyboardInterrupt:
        logger.info("Interrupted")
        code = 130
    except ConfigError as e:
        logger.critical(f"Configuration error: {e}")
        code = 2
    except ValidationError as e:
        logger.critical(f"Invalid parameters: {e}")
        code = 2
    except MaskmendError as e:
        logger.critical(f"Error: {e}")
        code = 1
    sys.exit(code)


if __name__ == "__main__":
    run()
