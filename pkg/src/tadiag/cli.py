"""Command-line interface.

Exit codes: 0 success, 1 validation failure (bad schema, inconsistent
annotations, invalid options), 2 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .dataset import ValidationError
from .io import InputError, load_characteristics, load_ground_truth, load_predictions
from .metrics import DEFAULT_TIOU_THRESHOLDS, EvaluationConfig
from .report import FORMATS, metrics_section, run_diagnosis, timestamp, write_json
from .synthetic import DEFAULT_MIXTURE, SyntheticSpec, generate_synthetic

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

log = logging.getLogger("tadiag")


def _thresholds(text: str) -> tuple[float, ...]:
    """Comma list (``0.5,0.75``) or ``start:step:stop`` inclusive range."""
    try:
        if ":" in text:
            start, step, stop = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(round((stop - start) / step)) + 1
            return tuple(round(start + i * step, 10) for i in range(n))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid threshold list {text!r}") from None


def _mixture(text: str) -> dict[str, float]:
    try:
        out = {}
        for part in text.split(","):
            k, v = part.split("=")
            out[k.strip().upper()] = float(v)
        return out
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid mixture {text!r}; expected TP=0.5,DD=0.1,...") from None


def _add_eval_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ground-truth", "-g", required=True, type=Path, help="ground-truth JSON")
    p.add_argument(
        "--predictions", "-p", required=True, action="append", type=Path,
        help="prediction JSON (repeat for several methods)",
    )
    p.add_argument("--subset", default=None, help="evaluate only videos of this subset")
    p.add_argument(
        "--tiou-thresholds", type=_thresholds, default=DEFAULT_TIOU_THRESHOLDS,
        help="comma list or start:step:stop (default 0.5:0.05:0.95)",
    )
    p.add_argument("--normalization-constant", type=float, default=None, help="N (default: mean instances per class)")
    p.add_argument("--top-k-factor", type=int, default=10, help="keep the top k·G_j predictions per class")
    p.add_argument("--output-dir", "-o", type=Path, default=Path("tadiag_out"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tadiag", description="Diagnose temporal action detectors.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="average-mAP and average-mAP_N only")
    _add_eval_options(ev)

    dg = sub.add_parser("diagnose", help="full diagnosis with JSON/CSV/SVG outputs")
    _add_eval_options(dg)
    dg.add_argument("--characteristics", "-c", type=Path, default=None, help="characteristics JSON")
    dg.add_argument("--format", choices=[*FORMATS, "all"], action="append", default=None, dest="formats")

    va = sub.add_parser("validate", help="check input files and report every problem")
    va.add_argument("--ground-truth", "-g", required=True, type=Path)
    va.add_argument("--predictions", "-p", action="append", type=Path, default=[])
    va.add_argument("--characteristics", "-c", type=Path, default=None)
    va.add_argument("--subset", default=None)

    sy = sub.add_parser("synth", help="write a synthetic benchmark with planted errors")
    sy.add_argument("--output-dir", "-o", type=Path, required=True)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--classes", type=int, default=20)
    sy.add_argument("--videos", type=int, default=200)
    sy.add_argument("--predictions", type=int, default=None, help="number of predictions (default: one per instance)")
    sy.add_argument(
        "--mixture", type=_mixture, default=None,
        help="category proportions, e.g. " + ",".join(f"{k}={v}" for k, v in DEFAULT_MIXTURE.items()),
    )
    sy.add_argument("--planting-threshold", type=float, default=0.5)
    return parser


def _config(args) -> EvaluationConfig:
    return EvaluationConfig(
        tiou_thresholds=args.tiou_thresholds,
        normalization_constant=args.normalization_constant,
        top_k_factor=args.top_k_factor,
    )


def cmd_evaluate(args) -> int:
    config = _config(args)
    dataset = load_ground_truth(args.ground_truth, args.subset)
    args.output_dir.mkdir(parents=True, exist_ok=True)
    rows = {}
    for path in args.predictions:
        preds = load_predictions(path, dataset)
        rows[path.name] = metrics_section(dataset, preds, config)
    doc = {
        "units": "percent",
        "normalization_constant": config.resolve_normalization(dataset),
        "tiou_thresholds": list(config.tiou_thresholds),
        "methods": rows,
        "timestamp": timestamp(),
    }
    write_json(doc, args.output_dir / "metrics.json")
    print(f"{'method':<32} {'avg-mAP':>9} {'top-kG':>9} {'avg-mAP_N':>10} {'top-kG':>9}")
    for name, m in rows.items():
        print(
            f"{name:<32} {m['average_map']['all']:9.2f} {m['average_map']['top_k']:9.2f} "
            f"{m['average_map_n']['all']:10.2f} {m['average_map_n']['top_k']:9.2f}"
        )
    return EXIT_OK


def cmd_diagnose(args) -> int:
    formats = args.formats or ["all"]
    formats = FORMATS if "all" in formats else tuple(formats)
    results = run_diagnosis(
        args.ground_truth,
        args.predictions,
        args.output_dir,
        characteristics=args.characteristics,
        config=_config(args),
        subset=args.subset,
        formats=formats,
    )
    for d in results:
        m = d.report["metrics"]
        print(f"{d.name}: average-mAP {m['average_map']['all']:.2f}  average-mAP_N {m['average_map_n']['all']:.2f}")
        for notice in d.report["sensitivity"]["notices"]:
            print(f"  note: {notice}")
    print(f"outputs written to {args.output_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    dataset = load_ground_truth(args.ground_truth, args.subset)
    if args.characteristics is not None:
        dataset = load_characteristics(args.characteristics, dataset)
    print(f"{args.ground_truth}: {len(dataset.videos)} videos, {len(dataset.instances)} instances, "
          f"{len(dataset.class_index)} classes")
    for w in dataset.warnings:
        print(f"  warning: {w}")
    for path in args.predictions:
        preds = load_predictions(path, dataset)
        print(f"{path}: {len(preds)} predictions")
        for w in preds.warnings:
            print(f"  warning: {w}")
    return EXIT_OK


def cmd_synth(args) -> int:
    kwargs = dict(
        seed=args.seed,
        n_classes=args.classes,
        n_videos=args.videos,
        n_predictions=args.predictions,
        planting_threshold=args.planting_threshold,
    )
    if args.mixture is not None:
        kwargs["mixture"] = args.mixture
    try:
        spec = SyntheticSpec(**kwargs)
    except ValueError as exc:
        raise ValidationError([str(exc)]) from exc
    paths = generate_synthetic(spec).write(args.output_dir)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    return EXIT_OK


COMMANDS = {"evaluate": cmd_evaluate, "diagnose": cmd_diagnose, "validate": cmd_validate, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print("validation failed:", file=sys.stderr)
        for issue in exc.issues:
            print(f"  {issue}", file=sys.stderr)
        return EXIT_INVALID
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # Invalid option values (e.g. thresholds outside (0, 1]).
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
