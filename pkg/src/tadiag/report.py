"""Full diagnosis runs and their serialization (JSON, CSV, SVG).

All metric values in reports are percentages in [0, 100] rounded to six
decimals; missing values are ``null`` in JSON and empty cells in CSV.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__, svg
from .analysis import (
    FN_PAIRS,
    FNReport,
    SensitivityProfile,
    average_fn_reports,
    bucket_groups,
    false_negatives,
    sensitivity_profile,
)
from .dataset import CHARACTERISTICS, Dataset, PredictionSet
from .diagnosis import (
    CATEGORIES,
    FP_CATEGORIES,
    ErrorImpact,
    FPProfile,
    VerdictTable,
    build_fp_profile,
    classify_predictions,
    error_impact,
)
from .io import file_digest, load_characteristics, load_ground_truth, load_predictions
from .metrics import EvaluationConfig, average_map, truncate_top_k

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "svg")
DIGITS = 6


def pct(x) -> float | None:
    """Fraction to rounded percentage; NaN and None become None."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return None
    return round(100.0 * x, DIGITS) + 0.0


def _pct_list(a) -> list:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        return pct(a)
    return [_pct_list(v) for v in a]


def timestamp() -> str:
    """UTC ISO-8601 time, pinned by ``SOURCE_DATE_EPOCH`` when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        moment = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return moment.isoformat().replace("+00:00", "Z")


@dataclass
class Diagnosis:
    """In-memory result of :func:`diagnose`."""

    report: dict
    dataset: Dataset
    top_k: PredictionSet
    verdicts: VerdictTable
    fp_profile: FPProfile
    impact: ErrorImpact
    sensitivity: SensitivityProfile
    fn: FNReport
    name: str = "method"


def config_document(config: EvaluationConfig, dataset: Dataset, subset: str | None = None) -> dict:
    norm = config.resolve_normalization(dataset)
    return {
        "tiou_thresholds": [float(t) for t in config.tiou_thresholds],
        "normalization_constant": norm,
        "normalization_source": "user" if config.normalization_constant is not None else "mean_instances_per_class",
        "top_k_factor": int(config.top_k_factor),
        "min_overlap_floor": float(config.min_overlap_floor),
        "n_splits": int(config.n_splits),
        "fn_precision_cutoff": float(config.fn_precision_cutoff),
        "subset": subset,
        "sensitivity_groups": {c: {k: list(v) for k, v in bucket_groups(c).items()} for c in CHARACTERISTICS},
    }


def metrics_section(dataset: Dataset, predictions: PredictionSet, config: EvaluationConfig, top=None) -> dict:
    """Average-mAP and average-mAP_N for all predictions and the top-k·G cut."""
    top = top if top is not None else truncate_top_k(predictions, dataset, config.top_k_factor)
    runs = {
        ("average_map", "all"): average_map(dataset, predictions, config, use_normalized=False),
        ("average_map", "top_k"): average_map(dataset, top, config, use_normalized=False),
        ("average_map_n", "all"): average_map(dataset, predictions, config, use_normalized=True),
        ("average_map_n", "top_k"): average_map(dataset, top, config, use_normalized=True),
    }
    out: dict = {"average_map": {}, "average_map_n": {}, "per_threshold": {}}
    for (metric, scope), summary in runs.items():
        out[metric][scope] = pct(summary.average)
        out["per_threshold"][f"{metric}_{scope}"] = _pct_list(summary.per_threshold_map)
    out["n_predictions"] = {"all": len(predictions), "top_k": len(top)}
    return out


def fp_profile_section(profile: FPProfile) -> dict:
    return {
        "scope": "top_k",
        "categories": list(CATEGORIES),
        "n_predictions": int(profile.n_predictions),
        "n_ground_truth": int(profile.n_ground_truth),
        "split_sizes": [int(s) for s in profile.split_sizes],
        "mean": _pct_list(profile.mean_fractions),
        "per_threshold": _pct_list(profile.fractions),
        "counts": profile.counts.tolist(),
    }


def impact_section(impact: ErrorImpact) -> dict:
    cats = {}
    dpt = impact.delta_per_threshold
    for name in FP_CATEGORIES:
        cats[name] = {
            "after": pct(impact.after[name]),
            "delta": pct(impact.delta[name]),
            "after_per_threshold": _pct_list(impact.after_per_threshold[name]),
            "delta_per_threshold": _pct_list(dpt[name]),
        }
    return {
        "scope": "top_k",
        "metric": "average_map_n",
        "baseline": pct(impact.baseline),
        "baseline_per_threshold": _pct_list(impact.baseline_per_threshold),
        "categories": cats,
    }


def sensitivity_section(profile: SensitivityProfile) -> dict:
    chars = {}
    for name, cs in profile.characteristics.items():
        chars[name] = {
            "buckets": list(cs.buckets),
            "counts": list(cs.counts),
            "values": [pct(v) for v in cs.values],
            "sensitivity": pct(profile.sensitivity(name)),
            "impact": pct(profile.impact(name)),
        }
    return {
        "scope": "all",
        "metric": "average_map_n",
        "overall": pct(profile.overall),
        "characteristics": chars,
        "notices": list(profile.notices),
    }


def fn_section(fn: FNReport, cutoff: float) -> dict:
    chars = {}
    for name, br in fn.characteristics.items():
        chars[name] = {
            "buckets": list(br.buckets),
            "totals": [int(t) for t in br.totals],
            "mean_rates": _pct_list(br.mean_rates),
            "per_threshold": _pct_list(br.rates),
        }
    pairs = []
    for (a, b), pr in fn.pairs.items():
        pairs.append(
            {
                "rows": a,
                "cols": b,
                "row_buckets": list(pr.row_buckets),
                "col_buckets": list(pr.col_buckets),
                "totals": pr.totals.astype(np.int64).tolist(),
                "mean_rates": _pct_list(pr.mean_rates),
                "per_threshold": _pct_list(pr.rates),
            }
        )
    overall = np.asarray(fn.overall_rate, dtype=np.float64)
    return {
        "scope": "all",
        "precision_cutoff": float(cutoff),
        "overall": {"mean": pct(overall.mean()) if overall.size else None, "per_threshold": _pct_list(overall)},
        "characteristics": chars,
        "pairs": pairs,
        "notices": list(fn.notices),
    }


def diagnose(
    dataset: Dataset,
    predictions: PredictionSet,
    config: EvaluationConfig | None = None,
    name: str = "method",
    subset: str | None = None,
    groups: Mapping[str, Mapping[str, Sequence[str]]] | None = None,
    pairs: Sequence[tuple[str, str]] = FN_PAIRS,
) -> Diagnosis:
    """Run every analysis on one prediction set and assemble the report.

    The FP profile and error impact use the top-k·G predictions per class;
    sensitivity and false-negative analysis use all predictions.
    """
    config = config or EvaluationConfig()
    top = truncate_top_k(predictions, dataset, config.top_k_factor)
    verdicts = classify_predictions(dataset, top, config.thresholds, config.min_overlap_floor)
    profile = build_fp_profile(dataset, predictions, config)
    impact = error_impact(dataset, top, config, verdicts)
    sens = sensitivity_profile(dataset, predictions, config, groups)
    fn = false_negatives(dataset, predictions, config, pairs)
    report = {
        "tool": {"name": "tadiag", "version": __version__},
        "method": name,
        "config": config_document(config, dataset, subset),
        "dataset": {
            "n_videos": len(dataset.videos),
            "n_instances": len(dataset.instances),
            "n_classes": len(dataset.class_index),
            "characteristics": [c for c in CHARACTERISTICS if dataset.has_characteristic(c)],
            "warnings": list(dataset.warnings) + list(predictions.warnings),
        },
        "units": "percent",
        "metrics": metrics_section(dataset, predictions, config, top),
        "fp_profile": fp_profile_section(profile),
        "error_impact": impact_section(impact),
        "sensitivity": sensitivity_section(sens),
        "false_negatives": fn_section(fn, config.fn_precision_cutoff),
    }
    return Diagnosis(report, dataset, top, verdicts, profile, impact, sens, fn, name)


# ---------------------------------------------------------------- writers


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return json.dumps(v)
    return v


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([_cell(v) for v in row] for row in rows)


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_json(obj, path: Path) -> None:
    _write_text(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def _fmt_threshold(t: float) -> str:
    return f"{t:.2f}"


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\r\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


VERDICT_HEADER = ("prediction_id", "video_id", "label", "score", "threshold", "category", "reference_instance", "tiou")


def write_verdicts(diag: Diagnosis, path: Path) -> None:
    """Long-format verdicts of the top-k·G predictions, one row per threshold.

    Rows are formatted directly (not through ``csv.writer``): at full scale
    this table has millions of rows.
    """
    top, v, ds = diag.top_k, diag.verdicts, diag.dataset
    keys = [_csv_field(g.key) for g in ds.instances]
    names = list(CATEGORIES)
    alphas = [_fmt_threshold(a) for a in v.thresholds]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(VERDICT_HEADER) + "\n")
        for i in top.ranking():
            prefix = (
                f"{int(top.prediction_id[i])},{_csv_field(str(top.video_id[i]))},"
                f"{_csv_field(str(top.label[i]))},{float(top.score[i])!r}"
            )
            lines = []
            for t, alpha in enumerate(alphas):
                ref = int(v.reference_index[t, i])
                if ref >= 0:
                    tail = f"{keys[ref]},{round(float(v.reference_tiou[t, i]), DIGITS)!r}"
                else:
                    tail = ",0.0"
                lines.append(f"{prefix},{alpha},{names[v.category[t, i]]},{tail}\n")
            fh.write("".join(lines))


def write_csvs(diag: Diagnosis, out: Path) -> list[Path]:
    r = diag.report
    th = [_fmt_threshold(t) for t in r["config"]["tiou_thresholds"]]
    written = []

    def emit(name, header, rows):
        p = out / name
        _write_csv(p, header, rows)
        written.append(p)

    m = r["metrics"]
    emit(
        "metrics.csv",
        ["method", "average_map_all", "average_map_top_k", "average_map_n_all", "average_map_n_top_k"],
        [[r["method"], m["average_map"]["all"], m["average_map"]["top_k"], m["average_map_n"]["all"], m["average_map_n"]["top_k"]]],
    )
    emit(
        "metrics_per_threshold.csv",
        ["threshold", *m["per_threshold"].keys()],
        [[t, *(v[i] for v in m["per_threshold"].values())] for i, t in enumerate(th)],
    )
    write_verdicts(diag, out / "verdicts.csv")
    written.append(out / "verdicts.csv")
    fp = r["fp_profile"]
    rows = []
    for s, size in enumerate(fp["split_sizes"]):
        rows.append(["mean", s + 1, size, *fp["mean"][s]])
    for t, alpha in enumerate(th):
        for s, size in enumerate(fp["split_sizes"]):
            rows.append([alpha, s + 1, size, *fp["per_threshold"][t][s]])
    emit("fp_profile.csv", ["threshold", "split", "size", *fp["categories"]], rows)

    ei = r["error_impact"]
    rows = [["baseline", "mean", ei["baseline"], ei["baseline"], 0.0]]
    for name, c in ei["categories"].items():
        rows.append([name, "mean", ei["baseline"], c["after"], c["delta"]])
        for t, alpha in enumerate(th):
            rows.append([name, alpha, ei["baseline_per_threshold"][t], c["after_per_threshold"][t], c["delta_per_threshold"][t]])
    emit("error_impact.csv", ["category", "threshold", "baseline", "after", "delta"], rows)

    se = r["sensitivity"]
    emit(
        "sensitivity.csv",
        ["characteristic", "bucket", "count", "average_map_n"],
        [[n, b, c["counts"][i], c["values"][i]] for n, c in se["characteristics"].items() for i, b in enumerate(c["buckets"])],
    )
    emit(
        "sensitivity_summary.csv",
        ["characteristic", "sensitivity", "impact", "overall"],
        [[n, c["sensitivity"], c["impact"], se["overall"]] for n, c in se["characteristics"].items()],
    )
    written += write_fn_csvs(r["false_negatives"], out, th)
    return written


def write_fn_csvs(fn: dict, out: Path, th: Sequence[str], prefix: str = "fn") -> list[Path]:
    written = []
    rows = []
    for name, c in fn["characteristics"].items():
        for i, b in enumerate(c["buckets"]):
            rows.append([name, b, c["totals"][i], "mean", c["mean_rates"][i]])
            for t, alpha in enumerate(th):
                rows.append([name, b, c["totals"][i], alpha, c["per_threshold"][t][i]])
    p = out / f"{prefix}_rates.csv"
    _write_csv(p, ["characteristic", "bucket", "total", "threshold", "miss_rate"], rows)
    written.append(p)
    for pair in fn["pairs"]:
        p = out / f"{prefix}_pair_{pair['rows']}__{pair['cols']}.csv"
        rows = [[rb, *pair["mean_rates"][i]] for i, rb in enumerate(pair["row_buckets"])]
        _write_csv(p, [f"{pair['rows']}\\{pair['cols']}", *pair["col_buckets"]], rows)
        written.append(p)
    return written


def write_svgs(diag: Diagnosis, out: Path) -> list[Path]:
    r = diag.report
    written = []

    def emit(name, text):
        p = out / name
        _write_text(p, text)
        written.append(p)

    fp = r["fp_profile"]
    bars = [
        (str(s + 1), [(v, f"fp_profile/mean/{s}/{c}") for c, v in enumerate(fp["mean"][s])])
        for s in range(len(fp["split_sizes"]))
    ]
    emit("fp_profile.svg", svg.stacked_bars("False-positive profile (top-kG, mean over tIoU)", bars, fp["categories"]))

    ei = r["error_impact"]
    groups = [("", [(n, c["delta"], f"error_impact/categories/{n}/delta") for n, c in ei["categories"].items()])]
    emit(
        "error_impact.svg",
        svg.grouped_bars("Average-mAP_N gain from removing each error", groups, "delta (pp)", colors=svg.PALETTE),
    )

    se = r["sensitivity"]
    if se["characteristics"]:
        groups = [
            (n, [(b, c["values"][i], f"sensitivity/characteristics/{n}/values/{i}") for i, b in enumerate(c["buckets"])])
            for n, c in se["characteristics"].items()
        ]
        emit(
            "sensitivity.svg",
            svg.grouped_bars(
                "Average-mAP_N per characteristic bucket",
                groups,
                "average-mAP_N (%)",
                reference=(se["overall"], "sensitivity/overall"),
            ),
        )
        groups = [
            (
                n,
                [
                    ("sens", c["sensitivity"], f"sensitivity/characteristics/{n}/sensitivity"),
                    ("impact", c["impact"], f"sensitivity/characteristics/{n}/impact"),
                ],
            )
            for n, c in se["characteristics"].items()
        ]
        emit("sensitivity_summary.svg", svg.grouped_bars("Sensitivity and impact", groups, "pp"))
    written += write_fn_svgs(r["false_negatives"], out, "false_negatives")
    return written


def write_fn_svgs(fn: dict, out: Path, root: str, prefix: str = "fn") -> list[Path]:
    written = []
    if fn["characteristics"]:
        groups = [
            (n, [(b, c["mean_rates"][i], f"{root}/characteristics/{n}/mean_rates/{i}") for i, b in enumerate(c["buckets"])])
            for n, c in fn["characteristics"].items()
        ]
        p = out / f"{prefix}_rates.svg"
        _write_text(p, svg.grouped_bars("False-negative rate per bucket", groups, "miss rate (%)", y_range=(0.0, 100.0)))
        written.append(p)
    for k, pair in enumerate(fn["pairs"]):
        cells = [
            [(v, f"{root}/pairs/{k}/mean_rates/{i}/{j}") for j, v in enumerate(row)]
            for i, row in enumerate(pair["mean_rates"])
        ]
        p = out / f"{prefix}_pair_{pair['rows']}__{pair['cols']}.svg"
        _write_text(
            p,
            svg.heat_grid(
                f"False-negative rate: {pair['rows']} x {pair['cols']}",
                pair["rows"],
                pair["cols"],
                pair["row_buckets"],
                pair["col_buckets"],
                cells,
            ),
        )
        written.append(p)
    return written


def write_outputs(diag: Diagnosis, out_dir: str | Path, formats: Iterable[str] = FORMATS) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats = set(formats)
    written = []
    if "json" in formats:
        p = out / "report.json"
        write_json(diag.report, p)
        written.append(p)
    if "csv" in formats:
        written += write_csvs(diag, out)
    if "svg" in formats:
        written += write_svgs(diag, out)
    return written


def _method_names(paths: Sequence[Path]) -> list[str]:
    names, seen = [], {}
    for p in paths:
        stem = p.name[: -len(".json")] if p.name.endswith(".json") else p.name
        k = seen.get(stem, 0)
        seen[stem] = k + 1
        names.append(stem if k == 0 else f"{stem}_{k + 1}")
    return names


def _input_entry(path: Path) -> dict:
    return {"file": path.name, "sha256": file_digest(path)}


def run_diagnosis(
    ground_truth: str | Path,
    predictions: Sequence[str | Path],
    output_dir: str | Path,
    characteristics: str | Path | None = None,
    config: EvaluationConfig | None = None,
    subset: str | None = None,
    formats: Iterable[str] = FORMATS,
) -> list[Diagnosis]:
    """Load inputs, diagnose each prediction file and write the outputs.

    With several prediction files each method gets its own subdirectory and
    the averaged false-negative analysis is written to ``fn_average.*``.
    """
    config = config or EvaluationConfig()
    formats = tuple(formats)
    gt_path = Path(ground_truth)
    dataset = load_ground_truth(gt_path, subset)
    if characteristics is not None:
        dataset = load_characteristics(characteristics, dataset)
    pred_paths = [Path(p) for p in predictions]
    names = _method_names(pred_paths)
    out = Path(output_dir)
    inputs = {"ground_truth": _input_entry(gt_path)}
    if characteristics is not None:
        inputs["characteristics"] = _input_entry(Path(characteristics))
    stamp = timestamp()

    results = []
    for name, path in zip(names, pred_paths):
        preds = load_predictions(path, dataset)
        logger.info("diagnosing %s (%d predictions)", name, len(preds))
        diag = diagnose(dataset, preds, config, name=name, subset=subset)
        diag.report["provenance"] = {
            "tool_version": __version__,
            "timestamp": stamp,
            "inputs": {**inputs, "predictions": _input_entry(path)},
        }
        target = out if len(pred_paths) == 1 else out / name
        write_outputs(diag, target, formats)
        results.append(diag)

    if len(results) > 1:
        write_fn_average(results, out, config, formats, stamp, inputs)
    return results


def write_fn_average(results: Sequence[Diagnosis], out: Path, config, formats, stamp, inputs) -> dict:
    avg = average_fn_reports([d.fn for d in results])
    doc = {
        "tool": {"name": "tadiag", "version": __version__},
        "methods": [d.name for d in results],
        "units": "percent",
        "false_negatives": fn_section(avg, config.fn_precision_cutoff),
        "provenance": {"tool_version": __version__, "timestamp": stamp, "inputs": inputs},
    }
    out.mkdir(parents=True, exist_ok=True)
    th = [_fmt_threshold(t) for t in config.tiou_thresholds]
    if "json" in formats:
        write_json(doc, out / "fn_average.json")
    if "csv" in formats:
        write_fn_csvs(doc["false_negatives"], out, th, prefix="fn_average")
    if "svg" in formats:
        write_fn_svgs(doc["false_negatives"], out, "false_negatives", prefix="fn_average")
    return doc


__all__ = [
    "Diagnosis",
    "FORMATS",
    "config_document",
    "diagnose",
    "metrics_section",
    "pct",
    "run_diagnosis",
    "timestamp",
    "write_outputs",
]
