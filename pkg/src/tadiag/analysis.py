"""Metric sensitivity to action characteristics and false-negative rates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import BUCKET_ORDER, CHARACTERISTICS, Dataset, PredictionSet
from .metrics import EvaluationConfig, evaluation, pr_curve

logger = logging.getLogger(__name__)

# Bucket groups used for the sensitivity bars; everything else maps 1:1.
SENSITIVITY_GROUPS: dict[str, dict[str, tuple[str, ...]]] = {
    "context_size": {"0": ("0",), "1-2": ("1", "2"), "3-4": ("3", "4"), "5-6": ("5", "6")},
}
FN_PAIRS = (
    ("coverage", "context_size"),
    ("agreement", "context_size"),
    ("coverage", "agreement"),
)


def bucket_groups(
    characteristic: str, overrides: Mapping[str, Mapping[str, Sequence[str]]] | None = None
) -> dict[str, tuple[str, ...]]:
    groups = (overrides or {}).get(characteristic) or SENSITIVITY_GROUPS.get(characteristic)
    if groups:
        return {k: tuple(v) for k, v in groups.items()}
    return {b: (b,) for b in BUCKET_ORDER[characteristic]}


def _members(dataset: Dataset, characteristic: str, buckets: str | Iterable[str]) -> np.ndarray:
    wanted = {buckets} if isinstance(buckets, str) else set(buckets)
    values = dataset.bucket_array(characteristic)
    return np.array([v in wanted for v in values], dtype=bool)


def subset_evaluation(
    dataset: Dataset,
    predictions: PredictionSet,
    config: EvaluationConfig | None,
    characteristic: str,
    bucket: str | Iterable[str],
    normalization: float | None = None,
) -> float | None:
    """Average-mAP_N restricted to instances in ``bucket`` (one label or several).

    Predictions whose best-overlapping instance (any label, tIoU at least the
    minimum overlap) lies outside the subset are ignored. ``N`` stays at its
    full-dataset value. Returns ``None`` for an empty bucket.
    """
    config = config or EvaluationConfig()
    gt_mask = _members(dataset, characteristic, bucket)
    return _subset_score(dataset, predictions, config, gt_mask, normalization)


def _subset_score(dataset, predictions, config, gt_mask, normalization=None):
    if not gt_mask.any():
        return None
    ev = evaluation(dataset, predictions)
    norm = normalization if normalization is not None else config.resolve_normalization(dataset)
    ref = ev.ref_gt
    anchored = (ref >= 0) & (ev.ref_iou >= config.min_overlap_floor)
    pred_mask = ~anchored | gt_mask[np.maximum(ref, 0)]
    matched = ev.match(config.thresholds, gt_mask=gt_mask, pred_mask=pred_mask)
    per_t = ev.map_per_threshold(matched, norm, gt_mask=gt_mask, pred_mask=pred_mask, normalized=True)
    return float(per_t.mean())


@dataclass
class CharacteristicSensitivity:
    buckets: list[str]
    values: list[float | None]
    counts: list[int]

    @property
    def present(self) -> list[float]:
        return [v for v in self.values if v is not None]

    @property
    def max(self) -> float | None:
        return max(self.present) if self.present else None

    @property
    def min(self) -> float | None:
        return min(self.present) if self.present else None


@dataclass
class SensitivityProfile:
    overall: float
    characteristics: dict[str, CharacteristicSensitivity]
    notices: list[str] = field(default_factory=list)

    def sensitivity(self, name: str) -> float | None:
        c = self.characteristics[name]
        return None if c.max is None else c.max - c.min

    def impact(self, name: str) -> float | None:
        c = self.characteristics[name]
        return None if c.max is None else c.max - self.overall


def sensitivity_profile(
    dataset: Dataset,
    predictions: PredictionSet,
    config: EvaluationConfig | None = None,
    groups: Mapping[str, Mapping[str, Sequence[str]]] | None = None,
    characteristics: Sequence[str] = CHARACTERISTICS,
) -> SensitivityProfile:
    """Average-mAP_N for every bucket of every characteristic."""
    config = config or EvaluationConfig()
    ev = evaluation(dataset, predictions)
    norm = config.resolve_normalization(dataset)
    matched = ev.match(config.thresholds)
    overall = float(ev.map_per_threshold(matched, norm, normalized=True).mean())
    out: dict[str, CharacteristicSensitivity] = {}
    notices = []
    for name in characteristics:
        if not dataset.has_characteristic(name):
            msg = f"characteristic {name!r} unavailable; omitted from sensitivity profile"
            logger.info(msg)
            notices.append(msg)
            continue
        buckets, values, counts = [], [], []
        for label, members in bucket_groups(name, groups).items():
            mask = _members(dataset, name, members)
            buckets.append(label)
            counts.append(int(mask.sum()))
            values.append(_subset_score(dataset, predictions, config, mask, norm))
        out[name] = CharacteristicSensitivity(buckets, values, counts)
    return SensitivityProfile(overall, out, notices)


def detected_instances(
    dataset: Dataset, predictions: PredictionSet, config: EvaluationConfig | None = None
) -> np.ndarray:
    """Boolean ``[threshold, instance]``: matched within the precision cutoff.

    Per class, the ranked list is cut after the last prediction whose
    normalized precision is still at least ``config.fn_precision_cutoff``;
    an instance counts as detected if a true positive inside that prefix
    claims it.
    """
    config = config or EvaluationConfig()
    ev = evaluation(dataset, predictions)
    norm = config.resolve_normalization(dataset)
    matched = ev.match(config.thresholds)
    counts = ev.gt_counts()
    n_t = len(config.thresholds)
    detected = np.zeros((n_t, ev.n_gt), dtype=bool)
    for c in np.flatnonzero(counts):
        idx = ev.class_order[ev.class_slices[c]]
        if not len(idx):
            continue
        m = matched[:, idx]
        curve = pr_curve(m >= 0, counts[c], norm)
        ok = curve.normalized_precision >= config.fn_precision_cutoff
        n = ok.shape[1]
        last = np.where(ok.any(axis=1), n - 1 - np.argmax(ok[:, ::-1], axis=1), -1)
        inside = np.arange(n)[None, :] <= last[:, None]
        t_idx, p_idx = np.nonzero(inside & (m >= 0))
        detected[t_idx, m[t_idx, p_idx]] = True
    return detected


@dataclass
class BucketRates:
    buckets: list[str]
    totals: np.ndarray
    missed: np.ndarray  # (T, B)

    @property
    def rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.missed / self.totals[None, :]

    @property
    def mean_rates(self) -> np.ndarray:
        return self.rates.mean(axis=0)


@dataclass
class PairRates:
    rows: str
    cols: str
    row_buckets: list[str]
    col_buckets: list[str]
    totals: np.ndarray  # (R, C)
    missed: np.ndarray  # (T, R, C)

    @property
    def rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.missed / self.totals[None]

    @property
    def mean_rates(self) -> np.ndarray:
        return self.rates.mean(axis=0)


@dataclass
class FNReport:
    thresholds: np.ndarray
    overall_rate: np.ndarray  # (T,)
    characteristics: dict[str, BucketRates]
    pairs: dict[tuple[str, str], PairRates]
    notices: list[str] = field(default_factory=list)


def _fn_buckets(characteristic: str, groups) -> dict[str, tuple[str, ...]]:
    if groups and characteristic in groups:
        return {k: tuple(v) for k, v in groups[characteristic].items()}
    return {b: (b,) for b in BUCKET_ORDER[characteristic]}


def false_negatives(
    dataset: Dataset,
    predictions: PredictionSet,
    config: EvaluationConfig | None = None,
    pairs: Sequence[tuple[str, str]] = FN_PAIRS,
    groups: Mapping[str, Mapping[str, Sequence[str]]] | None = None,
) -> FNReport:
    """Miss-detection rate per characteristic bucket and per bucket pair."""
    config = config or EvaluationConfig()
    missed = ~detected_instances(dataset, predictions, config)
    n_t = missed.shape[0]
    notices = []
    per_char: dict[str, BucketRates] = {}
    for name in CHARACTERISTICS:
        if not dataset.has_characteristic(name):
            notices.append(f"characteristic {name!r} unavailable; omitted from false-negative analysis")
            continue
        labels, totals, miss = [], [], []
        for label, members in _fn_buckets(name, groups).items():
            mask = _members(dataset, name, members)
            labels.append(label)
            totals.append(int(mask.sum()))
            miss.append(missed[:, mask].sum(axis=1))
        per_char[name] = BucketRates(
            labels, np.array(totals, dtype=np.int64), np.stack(miss, axis=1).reshape(n_t, len(labels))
        )

    per_pair: dict[tuple[str, str], PairRates] = {}
    for a, b in pairs:
        if a not in per_char or b not in per_char:
            notices.append(f"pair ({a}, {b}) skipped: characteristic unavailable")
            continue
        ga, gb = _fn_buckets(a, groups), _fn_buckets(b, groups)
        masks_a = [_members(dataset, a, m) for m in ga.values()]
        masks_b = [_members(dataset, b, m) for m in gb.values()]
        totals = np.zeros((len(ga), len(gb)), dtype=np.int64)
        miss = np.zeros((n_t, len(ga), len(gb)), dtype=np.int64)
        for i, ma in enumerate(masks_a):
            for j, mb in enumerate(masks_b):
                cell = ma & mb
                totals[i, j] = cell.sum()
                miss[:, i, j] = missed[:, cell].sum(axis=1)
        per_pair[(a, b)] = PairRates(a, b, list(ga), list(gb), totals, miss)

    overall = missed.mean(axis=1) if missed.shape[1] else np.full(n_t, np.nan)
    return FNReport(config.thresholds, overall, per_char, per_pair, notices)


def average_fn_reports(reports: Sequence[FNReport]) -> FNReport:
    """Element-wise mean of miss rates over several methods on one dataset.

    The averaged report stores rates as ``missed`` with unit ``totals``.
    """
    if not reports:
        raise ValueError("no reports to average")
    first = reports[0]
    chars = {}
    for name, br in first.characteristics.items():
        rates = np.mean([r.characteristics[name].rates for r in reports], axis=0)
        chars[name] = BucketRates(br.buckets, br.totals, rates * br.totals[None, :])
    prs = {}
    for key, pr in first.pairs.items():
        rates = np.mean([r.pairs[key].rates for r in reports], axis=0)
        prs[key] = PairRates(pr.rows, pr.cols, pr.row_buckets, pr.col_buckets, pr.totals, rates * pr.totals[None])
    overall = np.mean([r.overall_rate for r in reports], axis=0)
    return FNReport(first.thresholds, overall, chars, prs, list(first.notices))


def characteristic_distribution(dataset: Dataset) -> dict[str, dict[str, float]]:
    """Percentage of instances per bucket, over instances carrying the field."""
    out = {}
    for name in CHARACTERISTICS:
        values = [v for v in dataset.bucket_array(name) if v is not None]
        if not values:
            continue
        total = len(values)
        out[name] = {b: 100.0 * sum(v == b for v in values) / total for b in BUCKET_ORDER[name]}
    return out
