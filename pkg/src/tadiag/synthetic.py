"""Seeded generator of ground truth and detections with planted error types.

Every planted prediction is built to satisfy exactly one category rule at the
planting threshold against all ground truth of its video:

* ground-truth segments within a video are disjoint, so a prediction lying
  inside one instance has zero overlap with every other instance;
* TP/DD/WL/LOC/CON predictions are sub-segments of their anchor instance, so
  their tIoU with it is simply the length ratio;
* BG predictions live in background gaps and overlap nothing;
* each TP anchors a distinct instance and every DD scores below the TP of the
  instance it duplicates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .dataset import (
    CHARACTERISTICS,
    Dataset,
    PredictionSet,
    TemporalSegment,
    agreement_bucket,
    compute_agreement,
    coverage_bucket,
    instance_key,
    length_bucket,
    num_instances_bucket,
    validate_dataset,
)
from .diagnosis import CATEGORIES
from .io import attach_characteristics, parse_predictions

DEFAULT_MIXTURE = {"TP": 0.5, "DD": 0.1, "WL": 0.1, "LOC": 0.2, "CON": 0.05, "BG": 0.05}


class InfeasibleSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic benchmark.

    ``instances_per_video[i]`` is the probability of a video holding ``i + 1``
    instances (all of the video's class). ``score_model`` maps a category to
    Beta ``(a, b)`` parameters; categories not listed score Uniform(0, 1).
    ``degrade`` maps a characteristic to bucket labels whose instances get no
    overlapping prediction at all (they can only be missed).
    """

    seed: int = 0
    n_classes: int = 20
    n_videos: int = 200
    instances_per_video: tuple[float, ...] = (0.88, 0.09, 0.03)
    duration_range: tuple[float, float] = (30.0, 600.0)
    n_predictions: int | None = None
    mixture: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_MIXTURE))
    score_model: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    planting_threshold: float = 0.5
    margin: float = 0.05
    tp_tiou: tuple[float, float] = (1.0, 1.0)
    degrade: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    subset: str = "validation"
    max_resample: int = 100

    def __post_init__(self) -> None:
        unknown = set(self.mixture) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown categories in mixture: {sorted(unknown)}")
        if any(v < 0 for v in self.mixture.values()):
            raise ValueError("mixture proportions must be non-negative")
        if abs(sum(self.mixture.values()) - 1.0) > 1e-9:
            raise ValueError(f"mixture proportions sum to {sum(self.mixture.values())}, not 1")
        if abs(sum(self.instances_per_video) - 1.0) > 1e-9:
            raise ValueError("instances_per_video probabilities must sum to 1")
        a = self.planting_threshold
        if not 0.1 + self.margin < a - self.margin or a + self.margin > 1.0:
            raise ValueError("planting threshold leaves no room for LOC/CON overlaps")
        if self.n_classes < 2 and (self.mixture.get("WL", 0) or self.mixture.get("CON", 0)):
            raise ValueError("wrong-label plants need at least two classes")


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    ground_truth: dict
    characteristics: dict
    predictions: dict
    planted: list[str]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "ground_truth": out / "ground_truth.json",
            "characteristics": out / "characteristics.json",
            "predictions": out / "predictions.json",
            "planted": out / "planted_verdicts.csv",
        }
        for key in ("ground_truth", "characteristics", "predictions"):
            with open(paths[key], "w", encoding="utf-8") as fh:
                json.dump(getattr(self, key), fh, separators=(",", ":"))
                fh.write("\n")
        with open(paths["planted"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["prediction_id", "planted_category"])
            w.writerows(enumerate(self.planted))
        return paths

    def load(self) -> tuple[Dataset, PredictionSet]:
        """Parse through the regular validators (no files involved)."""
        dataset = attach_characteristics(validate_dataset(self.ground_truth), self.characteristics)
        return dataset, parse_predictions(self.predictions, dataset)


def _largest_remainder(mixture: Mapping[str, float], n: int) -> dict[str, int]:
    raw = {c: mixture.get(c, 0.0) * n for c in CATEGORIES}
    counts = {c: int(np.floor(v)) for c, v in raw.items()}
    left = n - sum(counts.values())
    for c in sorted(CATEGORIES, key=lambda c: (-(raw[c] - counts[c]), CATEGORIES.index(c)))[:left]:
        counts[c] += 1
    return counts


def _layout_video(rng, duration: float, k: int) -> list[tuple[float, float]]:
    if k == 1:
        cov = rng.uniform(0.02, 1.0)
        length = cov * duration
        start = rng.uniform(0.0, duration - length)
        return [(start, min(start + length, duration))]
    lengths = rng.uniform(0.02, 0.9 / k, size=k) * duration
    gaps = rng.dirichlet(np.ones(k + 1)) * (duration - lengths.sum())
    segs, t = [], 0.0
    for i in range(k):
        t += gaps[i]
        segs.append((t, t + lengths[i]))
        t += lengths[i]
    last_end = min(segs[-1][1], duration)
    segs[-1] = (segs[-1][0], last_end)
    return segs


def _reannotate(rng, start: float, end: float, duration: float, sigma: float) -> list[list[float]]:
    out = []
    for _ in range(3):
        s = float(np.clip(start + rng.normal(0.0, sigma), 0.0, duration))
        e = float(np.clip(end + rng.normal(0.0, sigma), 0.0, duration))
        if e - s < 1e-3:
            mid = 0.5 * (start + end)
            half = 0.25 * (end - start)
            s, e = mid - half, mid + half
        out.append([s, e])
    return out


def _context(rng) -> tuple[int, str]:
    size = int(rng.choice(7, p=[0.07, 0.08, 0.12, 0.15, 0.18, 0.2, 0.2]))
    if size == 0:
        return 0, "Inf"
    return size, str(rng.choice(["F", "M", "N"], p=[0.7, 0.18, 0.12]))


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    rng = np.random.default_rng(spec.seed)
    classes = [f"class_{j:03d}" for j in range(spec.n_classes)]

    # -- ground truth -------------------------------------------------------
    video_ids = [f"v_{i:06d}" for i in range(spec.n_videos)]
    durations = rng.uniform(*spec.duration_range, size=spec.n_videos)
    n_inst = rng.choice(len(spec.instances_per_video), size=spec.n_videos, p=spec.instances_per_video) + 1
    video_class = rng.integers(0, spec.n_classes, size=spec.n_videos)

    database: dict[str, dict] = {}
    inst_video, inst_label, inst_start, inst_end, inst_key = [], [], [], [], []
    gaps_by_video: dict[int, list[tuple[float, float]]] = {}
    for v, vid in enumerate(video_ids):
        dur = float(durations[v])
        segs = _layout_video(rng, dur, int(n_inst[v]))
        label = classes[video_class[v]]
        anns = []
        edges = [0.0]
        for idx, (s, e) in enumerate(segs):
            anns.append({"label": label, "segment": [float(s), float(e)]})
            inst_video.append(v)
            inst_label.append(int(video_class[v]))
            inst_start.append(float(s))
            inst_end.append(float(e))
            inst_key.append(instance_key(vid, idx))
            edges.extend([s, e])
        edges.append(dur)
        gaps_by_video[v] = [(a, b) for a, b in zip(edges[::2], edges[1::2]) if b - a >= 1.0]
        database[vid] = {"duration": dur, "subset": spec.subset, "annotations": anns}
    inst_video = np.array(inst_video)
    inst_label = np.array(inst_label)
    inst_start = np.array(inst_start)
    inst_end = np.array(inst_end)
    n_gt = len(inst_start)

    # -- characteristics ----------------------------------------------------
    characteristics: dict[str, dict] = {}
    buckets: dict[str, list[str]] = {k: [] for k in CHARACTERISTICS}
    for i in range(n_gt):
        v = inst_video[i]
        dur = float(durations[v])
        s, e = inst_start[i], inst_end[i]
        length = e - s
        sigma = rng.uniform(0.0, 0.6) * length
        reann = _reannotate(rng, s, e, dur, sigma)
        agree = compute_agreement([TemporalSegment(s, e)] + [TemporalSegment(*r) for r in reann])
        size, dist = _context(rng)
        characteristics[inst_key[i]] = {
            "context-size": size,
            "context-distance": dist,
            "agreement": reann,
        }
        buckets["context_size"].append(str(size))
        buckets["context_distance"].append(dist)
        buckets["agreement"].append(agreement_bucket(agree))
        buckets["coverage"].append(coverage_bucket(min(length / dur, 1.0)))
        buckets["length"].append(length_bucket(length))
        buckets["num_instances"].append(num_instances_bucket(int(n_inst[v])))

    degraded = np.zeros(n_gt, dtype=bool)
    for name, wanted in spec.degrade.items():
        degraded |= np.isin(np.array(buckets[name], dtype=object), list(wanted))
    eligible = np.flatnonzero(~degraded)

    # -- planted predictions ------------------------------------------------
    n_pred = spec.n_predictions if spec.n_predictions is not None else n_gt
    counts = _largest_remainder(spec.mixture, n_pred)
    if counts["TP"] > len(eligible):
        raise InfeasibleSpecError(
            f"{counts['TP']} true positives requested but only {len(eligible)} eligible instances"
        )
    if counts["DD"] and not counts["TP"]:
        raise InfeasibleSpecError("double detections need at least one true positive")
    if (counts["WL"] + counts["LOC"] + counts["CON"]) and not len(eligible):
        raise InfeasibleSpecError("no eligible instance to anchor overlapping predictions")

    def draw_scores(cat: str, size: int) -> np.ndarray:
        if cat in spec.score_model:
            a, b = spec.score_model[cat]
            return rng.beta(a, b, size=size)
        return rng.uniform(0.0, 1.0, size=size)

    alpha, m = spec.planting_threshold, spec.margin
    tiou_range = {
        "TP": spec.tp_tiou,
        "DD": (alpha + m, 1.0),
        "WL": (alpha + m, 1.0),
        "LOC": (0.1 + m, alpha - m),
        "CON": (0.1 + m, alpha - m),
    }

    cat_list: list[str] = []
    p_video: list[int] = []
    p_label: list[int] = []
    p_start: list[float] = []
    p_end: list[float] = []
    p_score: list[float] = []

    def plant_inside(cat: str, anchors: np.ndarray, labels: np.ndarray, scores: np.ndarray) -> None:
        lo, hi = tiou_range[cat]
        ratio = rng.uniform(lo, hi, size=len(anchors))
        offset = rng.uniform(0.0, 1.0, size=len(anchors))
        s, e = inst_start[anchors], inst_end[anchors]
        length = e - s
        ps = s + offset * (1.0 - ratio) * length
        pe = np.minimum(ps + ratio * length, e)
        exact = ratio >= 1.0
        ps[exact], pe[exact] = s[exact], e[exact]
        cat_list.extend([cat] * len(anchors))
        p_video.extend(inst_video[anchors].tolist())
        p_label.extend(labels.tolist())
        p_start.extend(ps.tolist())
        p_end.extend(pe.tolist())
        p_score.extend(scores.tolist())

    def other_label(labels: np.ndarray) -> np.ndarray:
        shift = rng.integers(1, spec.n_classes, size=len(labels))
        return (labels + shift) % spec.n_classes

    tp_anchor = rng.choice(eligible, size=counts["TP"], replace=False)
    tp_scores = draw_scores("TP", counts["TP"])
    plant_inside("TP", tp_anchor, inst_label[tp_anchor], tp_scores)

    if counts["DD"]:
        dd_scores = draw_scores("DD", counts["DD"])
        order = np.argsort(tp_scores)
        sorted_tp = tp_scores[order]
        dd_anchor = np.empty(counts["DD"], dtype=np.int64)
        for i in range(counts["DD"]):
            for _ in range(spec.max_resample):
                if dd_scores[i] < sorted_tp[-1]:
                    break
                dd_scores[i] = draw_scores("DD", 1)[0]
            else:
                dd_scores[i] = rng.uniform(0.0, 1.0) * sorted_tp[-1]
            first_above = np.searchsorted(sorted_tp, dd_scores[i], side="right")
            pick = rng.integers(first_above, len(sorted_tp))
            dd_anchor[i] = tp_anchor[order[pick]]
        plant_inside("DD", dd_anchor, inst_label[dd_anchor], dd_scores)

    for cat, relabel in (("WL", True), ("LOC", False), ("CON", True)):
        if not counts[cat]:
            continue
        anchors = rng.choice(eligible, size=counts[cat], replace=True)
        labels = other_label(inst_label[anchors]) if relabel else inst_label[anchors]
        plant_inside(cat, anchors, labels, draw_scores(cat, counts[cat]))

    if counts["BG"]:
        with_gap = [v for v in range(spec.n_videos) if gaps_by_video[v]]
        for _ in range(counts["BG"]):
            v = None
            for _ in range(spec.max_resample):
                cand = int(rng.integers(0, spec.n_videos))
                if gaps_by_video[cand]:
                    v = cand
                    break
            if v is None:
                if not with_gap:
                    raise InfeasibleSpecError("background plants need a video with uncovered time")
                raise InfeasibleSpecError(
                    f"no background gap found after {spec.max_resample} resamples"
                )
            gaps = gaps_by_video[v]
            a, b = gaps[int(rng.integers(0, len(gaps)))]
            glen = b - a
            length = rng.uniform(0.2, 1.0) * glen
            start = a + rng.uniform(0.0, glen - length)
            cat_list.append("BG")
            p_video.append(v)
            p_label.append(int(rng.integers(0, spec.n_classes)))
            p_start.append(float(start))
            p_end.append(float(min(start + length, b)))
            p_score.append(float(draw_scores("BG", 1)[0]))

    # File order: videos in id order, predictions shuffled within a video.
    n_total = len(cat_list)
    perm = rng.permutation(n_total)
    p_video_arr = np.asarray(p_video, dtype=np.int64)
    file_order = perm[np.argsort(p_video_arr[perm], kind="stable")]
    results: dict[str, list] = {}
    planted: list[str] = []
    for i in file_order:
        results.setdefault(video_ids[p_video[i]], []).append(
            {
                "label": classes[p_label[i]],
                "segment": [p_start[i], p_end[i]],
                "score": p_score[i],
            }
        )
        planted.append(cat_list[i])

    return SyntheticData(
        spec=spec,
        ground_truth={"version": "synthetic", "database": database},
        characteristics=characteristics,
        predictions={"version": "synthetic", "results": results, "external_data": {}},
        planted=planted,
    )
