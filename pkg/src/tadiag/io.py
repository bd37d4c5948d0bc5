"""Readers for ground-truth, prediction and characteristics JSON files."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Mapping

from .dataset import (
    BUCKET_ORDER,
    Dataset,
    PredictionSet,
    TemporalSegment,
    ValidationError,
    derive_characteristics,
    instance_key,
    normalize_context_distance,
    validate_dataset,
)

logger = logging.getLogger(__name__)

# Per-annotation fields that may be embedded in the ground truth instead of a
# separate characteristics file.
_CHARACTERISTIC_FIELDS = ("context-size", "context-distance", "agreement")


class InputError(OSError):
    """Unreadable file or malformed JSON."""


def read_json(path: str | Path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"{path}: cannot read file ({exc.strerror or exc})") from exc
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8 at byte offset {exc.start}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise InputError(
            f"{path}: malformed JSON at byte offset {offset} "
            f"(line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_ground_truth(path: str | Path, subset: str | None = None) -> Dataset:
    raw = read_json(path)
    dataset = validate_dataset(raw).restrict_subset(subset)
    embedded = _embedded_characteristics(raw, dataset)
    if embedded:
        dataset = attach_characteristics(dataset, embedded)
    return dataset


def _embedded_characteristics(raw: Mapping, dataset: Dataset) -> dict:
    out = {}
    database = raw.get("database", {})
    for g in dataset.instances:
        ann = database[g.video_id]["annotations"][g.annotation_index]
        fields = {k: ann[k] for k in ann if k in _CHARACTERISTIC_FIELDS or k in ("coverage", "length", "num-instances")}
        if any(k in fields for k in _CHARACTERISTIC_FIELDS):
            out[g.key] = fields
    return out


def _number(value) -> float | None:
    if isinstance(value, bool):
        return None
    try:
        x = float(value)
    except (TypeError, ValueError):
        return None
    return x if math.isfinite(x) else None


def _prediction_fields(p: Mapping, where: str, video_id: str, issues: list[str]):
    """``(label, start, end, score)`` or ``None`` after recording every problem."""
    n_before = len(issues)
    label = p.get("label")
    if not isinstance(label, str) or not label:
        issues.append(f"{where}.label: missing or not a string")
    score = _number(p.get("score"))
    if score is None:
        issues.append(f"{where}.score: missing or not a finite number")
    seg = p.get("segment")
    start = end = None
    if not isinstance(seg, (list, tuple)) or len(seg) != 2:
        issues.append(f"{where}.segment: must be a [start, end] pair")
    else:
        start, end = _number(seg[0]), _number(seg[1])
        if start is None or end is None:
            issues.append(f"{where}.segment: bounds must be finite numbers")
        elif end <= start:
            kind = "zero-length" if end == start else "inverted"
            issues.append(f"{where}.segment: {kind} segment [{start}, {end}] in video {video_id}")
    if len(issues) > n_before:
        return None
    return label, start, end, score


def parse_predictions(raw, dataset: Dataset) -> PredictionSet:
    """Validate an ActivityNet-style ``{"results": {video_id: [...]}}`` document.

    Predictions on videos unknown to ``dataset`` are dropped with a warning;
    a negative start is clamped to 0 with a warning. Everything else that
    violates the data model is collected and raised together.
    """
    if not isinstance(raw, Mapping) or not isinstance(raw.get("results"), Mapping):
        raise ValidationError(["results: missing top-level 'results' object"])
    issues: list[str] = []
    warnings: list[str] = []
    cols: dict[str, list] = {k: [] for k in ("video_id", "label", "start", "end", "score", "id")}
    ordinal = 0
    dropped: dict[str, int] = {}
    for video_id, preds in raw["results"].items():
        where = f"results.{video_id}"
        if not isinstance(preds, list):
            issues.append(f"{where}: must be a list")
            continue
        for idx, p in enumerate(preds):
            pid = ordinal
            ordinal += 1
            pwhere = f"{where}[{idx}]"
            if not isinstance(p, Mapping):
                issues.append(f"{pwhere}: prediction must be an object")
                continue
            parsed = _prediction_fields(p, pwhere, video_id, issues)
            if parsed is None:
                continue
            label, start, end, score = parsed
            if video_id not in dataset.videos:
                dropped[video_id] = dropped.get(video_id, 0) + 1
                continue
            if start < 0:
                if end <= 0:
                    issues.append(f"{pwhere}.segment: [{start}, {end}] lies before the video start")
                    continue
                msg = f"{pwhere}.segment: start {start} clamped to 0"
                logger.warning(msg)
                warnings.append(msg)
                start = 0.0
            cols["video_id"].append(video_id)
            cols["label"].append(label)
            cols["start"].append(start)
            cols["end"].append(end)
            cols["score"].append(score)
            cols["id"].append(pid)
    if issues:
        raise ValidationError(issues)
    for video_id, count in dropped.items():
        msg = f"results.{video_id}: {count} prediction(s) on a video absent from the ground truth dropped"
        logger.warning(msg)
        warnings.append(msg)
    return PredictionSet(
        cols["video_id"], cols["label"], cols["start"], cols["end"], cols["score"], cols["id"], warnings
    )


def load_predictions(path: str | Path, dataset: Dataset) -> PredictionSet:
    return parse_predictions(read_json(path), dataset)


def _parse_agreement(value, where: str, issues: list[str]):
    if isinstance(value, str):
        if value.strip().upper() not in BUCKET_ORDER["agreement"]:
            issues.append(f"{where}: unknown agreement bucket {value!r}")
            return None
        return value.strip().upper()
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if not 0.0 <= value <= 1.0:
            issues.append(f"{where}: agreement score {value} outside [0, 1]")
            return None
        return float(value)
    if isinstance(value, list):
        segs = []
        for j, s in enumerate(value):
            try:
                segs.append(TemporalSegment(float(s[0]), float(s[1])))
            except (TypeError, ValueError, IndexError) as exc:
                issues.append(f"{where}[{j}]: invalid re-annotation segment ({exc})")
                return None
        if not segs:
            issues.append(f"{where}: empty re-annotation list")
            return None
        return segs
    issues.append(f"{where}: expected bucket label, score or list of segments")
    return None


def _parse_context(size, dist, where: str, issues: list[str]):
    if isinstance(size, bool) or not isinstance(size, int) or not 0 <= size <= 6:
        issues.append(f"{where}.context-size: must be an integer in 0..6, got {size!r}")
        return None
    if dist is not None:
        try:
            dist = normalize_context_distance(dist)
        except ValueError as exc:
            issues.append(f"{where}.context-distance: {exc}")
            return None
    if size > 0 and dist == "Inf":
        issues.append(f"{where}: context-size {size} but context-distance Inf")
        return None
    if size == 0 and dist not in (None, "Inf"):
        issues.append(f"{where}: context-size 0 but context-distance {dist}")
        return None
    return size, dist


def attach_characteristics(dataset: Dataset, raw: Mapping) -> Dataset:
    """Derive characteristic profiles from a characteristics mapping.

    ``raw`` maps ``"<video_id>:<annotation_index>"`` to an object with
    ``context-size``, ``context-distance`` and ``agreement``; optional
    precomputed ``coverage``/``length``/``num-instances`` buckets are checked
    against the derived ones.
    """
    if not isinstance(raw, Mapping):
        raise ValidationError(["characteristics: top level must be an object"])
    by_key = {g.key: g for g in dataset.instances}
    issues: list[str] = []
    agreement: dict[int, object] = {}
    context: dict[int, tuple[int, str | None]] = {}
    precomputed: dict[int, dict[str, str]] = {}
    for key, entry in raw.items():
        where = f"characteristics.{key}"
        g = by_key.get(key)
        if g is None:
            video_id = key.rsplit(":", 1)[0]
            if video_id in dataset.videos or ":" not in key:
                issues.append(f"{where}: no ground-truth instance with this key")
            continue  # entries for videos outside the evaluated subset are skipped
        if not isinstance(entry, Mapping):
            issues.append(f"{where}: entry must be an object")
            continue
        if "context-size" in entry:
            parsed = _parse_context(entry["context-size"], entry.get("context-distance"), where, issues)
            if parsed is not None:
                context[g.instance_id] = parsed
        if "agreement" in entry:
            value = _parse_agreement(entry["agreement"], where + ".agreement", issues)
            if value is not None:
                agreement[g.instance_id] = value
        pre = {k: entry[k] for k in ("coverage", "length", "num-instances") if k in entry}
        if pre:
            precomputed[g.instance_id] = pre

    if precomputed:
        # These buckets depend on the ground truth alone.
        base = derive_characteristics(dataset)
        for iid, pre in precomputed.items():
            for name, stored in pre.items():
                derived = base[iid].bucket(name.replace("-", "_"))
                if str(stored).upper() != derived:
                    issues.append(
                        f"characteristics.{dataset.instances[iid].key}.{name}: precomputed bucket "
                        f"{stored!r} disagrees with derived {derived!r}"
                    )
    if issues:
        raise ValidationError(issues)
    profiles = derive_characteristics(dataset, agreement, context)
    return dataset.with_characteristics(profiles)


def load_characteristics(path: str | Path, dataset: Dataset) -> Dataset:
    return attach_characteristics(dataset, read_json(path))


def dump_json(obj, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def ground_truth_document(dataset: Dataset) -> dict:
    """Inverse of :func:`load_ground_truth` (without characteristics)."""
    db: dict[str, dict] = {}
    for vid, rec in dataset.videos.items():
        db[vid] = {"duration": rec.duration, "subset": rec.subset, "annotations": []}
    for g in dataset.instances:
        db[g.video_id]["annotations"].append(
            {"label": g.label, "segment": [g.segment.start, g.segment.end]}
        )
    return {"database": db}


def predictions_document(predictions: PredictionSet) -> dict:
    results: dict[str, list] = {}
    for i in range(len(predictions)):
        results.setdefault(str(predictions.video_id[i]), []).append(
            {
                "label": str(predictions.label[i]),
                "segment": [float(predictions.start[i]), float(predictions.end[i])],
                "score": float(predictions.score[i]),
            }
        )
    return {"results": results}


__all__ = [
    "InputError",
    "attach_characteristics",
    "dump_json",
    "file_digest",
    "ground_truth_document",
    "instance_key",
    "load_characteristics",
    "load_ground_truth",
    "load_predictions",
    "parse_predictions",
    "predictions_document",
    "read_json",
]
