import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import orjson
from pydantic import ValidationError

from utils.utils import JsonLinesWriter, dumps_line, get_thread_count, load_environment_variables, setup_logging
from src.checkpoint import load_checkpoint, save_checkpoint
from src.config import Command, DatasetKind, RunConfig, resolve_run_config
from src.data import Dataset, idx_paths, load_input, load_mnist_idx, synth_shapes, synth_speech_task, write_idx
from src.errors import GradcheckFailure
from src.gradcheck import run_gradcheck
from src.hybrid import build_model
from src.qgradcam import explain, export_overlay
from src.training_engine import TrainingEngine

logger = logging.getLogger("qgradcam")

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2

DEFAULT_TRAIN_COUNT = {"synth-shapes": 200, "synth-speech": 200, "idx": 500}
DEFAULT_TEST_COUNT = 100
DEFAULT_DIGITS = [0, 1]
GRADCHECK_QUBITS = 4

# argparse dest -> RunConfig field
FLAG_FIELDS = {
    "dataset": "dataset",
    "epochs": "epochs",
    "batch": "batch_size",
    "lr_classical": "lr_classical",
    "lr_quantum": "lr_quantum",
    "optimizer": "optimizer",
    "qubits": "qubits",
    "blocks": "blocks",
    "seed": "seed",
    "out": "out",
    "checkpoint": "checkpoint",
    "class_label": "class_label",
    "grad_path": "grad_path",
    "input": "input",
    "kind": "kind",
    "count": "count",
    "trials": "trials",
    "digits": "digits",
    "train_count": "train_count",
    "test_count": "test_count",
}


def _digits(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated digits, got {value!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgradcam", description="Hybrid CNN / quantum classifier with Grad-CAM")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of RunConfig fields; flags take precedence")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="Output directory")
    common.add_argument("--qubits", type=int)
    common.add_argument("--blocks", type=int)

    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[common], help="Train a hybrid model end to end")
    train.add_argument("--dataset", help="synth-shapes, synth-speech or a directory of IDX files")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch", type=int)
    train.add_argument("--lr-classical", type=float)
    train.add_argument("--lr-quantum", type=float)
    train.add_argument("--optimizer", choices=["sgd", "momentum"])
    train.add_argument("--checkpoint", help="Where to write the checkpoint (default <out>/model.qgcm)")
    train.add_argument("--digits", type=_digits, help="IDX labels to keep, e.g. 0,1")
    train.add_argument("--train-count", type=int)
    train.add_argument("--test-count", type=int)

    expl = sub.add_parser("explain", parents=[common], help="Write a Grad-CAM heatmap and overlay for one input")
    expl.add_argument("--checkpoint")
    expl.add_argument("--input", help="Image, .npy array or 16 kHz WAV file")
    expl.add_argument("--class", dest="class_label", help="1-based class or 'predicted'")
    expl.add_argument("--grad-path", choices=["shift", "analytic"])

    check = sub.add_parser("gradcheck", parents=[common], help="Verify the gradient paths against each other")
    check.add_argument("--trials", type=int)
    check.add_argument("--shift-override", type=float, help=argparse.SUPPRESS)

    demo = sub.add_parser("demo-data", parents=[common], help="Write a synthetic dataset as IDX files")
    demo.add_argument("--kind", choices=[kind.value for kind in DatasetKind])
    demo.add_argument("--count", type=int)
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    flags = {field: getattr(args, dest) for dest, field in FLAG_FIELDS.items() if hasattr(args, dest)}
    if "QGCAM_THREADS" in os.environ:
        flags["threads"] = get_thread_count()
    return flags


def load_datasets(config: RunConfig) -> Tuple[Dataset, Dataset]:
    """(train, test) for the dataset selector; the two splits never share samples"""
    if not config.dataset:
        raise ValueError("--dataset is required for train (synth-shapes, synth-speech or an IDX directory)")
    if config.dataset in ("synth-shapes", "synth-speech"):
        train_count = config.train_count or DEFAULT_TRAIN_COUNT[config.dataset]
        test_count = config.test_count or DEFAULT_TEST_COUNT
        if config.dataset == "synth-shapes":
            return (
                synth_shapes(train_count, config.seed, split="train"),
                synth_shapes(test_count, config.seed + 1, split="test"),
            )
        return (
            synth_speech_task(train_count, config.seed, split="train"),
            synth_speech_task(test_count, config.seed + 1, split="test"),
        )

    directory = Path(config.dataset)
    if not directory.is_dir():
        raise ValueError(f"--dataset: {directory} is neither a synthetic dataset name nor a directory")
    digits = config.digits or DEFAULT_DIGITS
    train = load_mnist_idx(*idx_paths(directory, "train"), split="train", stored_labels=digits)
    test = load_mnist_idx(*idx_paths(directory, "t10k"), split="test", stored_labels=digits)
    train_count = min(config.train_count or DEFAULT_TRAIN_COUNT["idx"], len(train))
    test_count = min(config.test_count or DEFAULT_TEST_COUNT, len(test))
    return train.subset(train_count, seed=config.seed), test.subset(test_count, seed=config.seed)


def cmd_train(config: RunConfig) -> int:
    train_set, test_set = load_datasets(config)
    model = build_model(train_set.input_shape, train_set.num_classes, config.qubits, config.blocks, config.seed)
    out_dir = Path(config.out)
    checkpoint_path = Path(config.checkpoint) if config.checkpoint else out_dir / "model.qgcm"

    with JsonLinesWriter(out_dir / "metrics.jsonl", echo=sys.stdout.buffer) as metrics:
        # threads are excluded so logs match across worker counts
        metrics.write({"event": "config", "config": config.model_dump(mode="json", exclude={"threads"})})
        engine = TrainingEngine(config.get_train_config())
        result = engine.train(
            model, train_set, validation=test_set, on_epoch=lambda record: metrics.write({"event": "epoch", **record.to_dict()})
        )
        save_checkpoint(result.model, checkpoint_path)
        best = result.history[result.best_epoch - 1]
        metrics.write(
            {
                "event": "done",
                "checkpoint": str(checkpoint_path),
                "best_epoch": result.best_epoch,
                "train_accuracy": best.train_accuracy,
                "test_accuracy": best.test_accuracy,
                "consumed_sha256": result.consumed_sha256,
            }
        )
    logger.info(f"Best epoch {result.best_epoch}: test accuracy {best.test_accuracy:.3f}; checkpoint {checkpoint_path}")
    return EXIT_OK


def cmd_explain(config: RunConfig) -> int:
    if not config.checkpoint:
        raise ValueError("--checkpoint is required for explain")
    if not config.input:
        raise ValueError("--input is required for explain")
    model = load_checkpoint(config.checkpoint)
    _, height, width = model.spec.input_shape
    image = load_input(config.input, (height, width))
    class_label = None if config.class_label == "predicted" else config.class_label
    explanation = explain(model, image, class_label, config.get_gradient_provider())
    pgm_path, png_path = export_overlay(
        image, explanation.heatmap.upsampled, config.out, Path(config.input).stem, explanation.class_label
    )
    summary = {**explanation.summary(), "heatmap": str(pgm_path), "overlay": str(png_path)}
    sys.stdout.buffer.write(dumps_line(summary))
    scores = ", ".join(f"{label}: {score:.4f}" for label, score in enumerate(explanation.scores, start=1))
    logger.info(f"Predicted class {explanation.predicted}; scores {scores}")
    return EXIT_OK


def cmd_gradcheck(config: RunConfig, shift: Optional[float] = None) -> int:
    qubits = config.qubits if "qubits" in config.model_fields_set else GRADCHECK_QUBITS
    report = run_gradcheck(qubits=qubits, blocks=config.blocks, trials=config.trials, seed=config.seed, shift=shift)
    sys.stdout.buffer.write(dumps_line({"event": "gradcheck", **report.to_dict()}))
    try:
        report.raise_for_failure()
    except GradcheckFailure as e:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        worst_path = out_dir / "gradcheck_worst_case.json"
        worst_path.write_bytes(orjson.dumps(e.worst_case, option=orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2))
        logger.error(f"{e}; worst case written to {worst_path}")
        return EXIT_VERIFICATION_FAILED
    logger.info("All gradient checks passed")
    return EXIT_OK


def cmd_demo_data(config: RunConfig) -> int:
    """Writes <out>/<kind>/{train,t10k}-*-ubyte so the directory works as a --dataset"""
    out_dir = Path(config.out) / config.kind.value
    test_count = max(2, config.count // 4)
    if config.kind == DatasetKind.SHAPES:
        splits = {"train": synth_shapes(config.count, config.seed), "t10k": synth_shapes(test_count, config.seed + 1)}
    else:
        splits = {
            "train": synth_speech_task(config.count, config.seed),
            "t10k": synth_speech_task(test_count, config.seed + 1),
        }
    for prefix, dataset in splits.items():
        write_idx(dataset, out_dir / f"{prefix}-images-idx3-ubyte", out_dir / f"{prefix}-labels-idx1-ubyte")
        if dataset.bands is not None:
            (out_dir / f"{prefix}-bands.json").write_bytes(orjson.dumps(dataset.bands, option=orjson.OPT_SERIALIZE_NUMPY))
        counts = {str(label): int((dataset.labels == label).sum()) for label in range(1, dataset.num_classes + 1)}
        sys.stdout.buffer.write(
            dumps_line({"event": "demo-data", "split": prefix, "samples": len(dataset), "per_class": counts,
                        "shape": list(dataset.images.shape[1:]), "directory": str(out_dir)})
        )
    logger.info(f"Wrote {config.kind.value} dataset to {out_dir}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_environment_variables()
    setup_logging()
    args = build_parser().parse_args(argv)

    try:
        config = resolve_run_config(args.command, _flags(args), args.config)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_USAGE
    except ValueError as e:
        logger.error(str(e))
        return EXIT_USAGE

    try:
        if config.command == Command.TRAIN:
            return cmd_train(config)
        elif config.command == Command.EXPLAIN:
            return cmd_explain(config)
        elif config.command == Command.GRADCHECK:
            return cmd_gradcheck(config, shift=args.shift_override)
        else:
            return cmd_demo_data(config)
    except ValueError as e:
        # covers shape, class, checkpoint and dataset format errors
        logger.error(str(e))
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        raise


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
