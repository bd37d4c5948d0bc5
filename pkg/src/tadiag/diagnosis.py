"""False-positive taxonomy, false-positive profiles and per-error impact."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from .dataset import Dataset, GroundTruthInstance, Prediction, PredictionSet, tiou
from .metrics import EvaluationConfig, MatchTable, evaluation, truncate_top_k


class ErrorCategory(IntEnum):
    TP = 0
    DD = 1  # double detection
    WL = 2  # wrong label
    LOC = 3  # localization
    CON = 4  # confusion
    BG = 5  # background


CATEGORIES = tuple(c.name for c in ErrorCategory)
FP_CATEGORIES = CATEGORIES[1:]


@dataclass(frozen=True)
class ErrorVerdict:
    category: ErrorCategory
    threshold: float
    reference_instance_id: int | None
    reference_tiou: float


def classify_fp(
    prediction: Prediction,
    ground_truth: Sequence[GroundTruthInstance],
    matches: MatchTable,
    alpha: float,
    min_overlap: float = 0.1,
) -> ErrorVerdict:
    """Verdict of a single prediction at threshold ``alpha``.

    ``ground_truth`` is every instance of the prediction's video (all
    labels). A true positive in ``matches`` is reported as TP; otherwise the
    instance of highest tIoU (same label first on ties, then lower id) decides
    between DD, WL, LOC, CON and BG.
    """
    col = matches.column(prediction.prediction_id)
    t = matches.threshold_index(alpha)
    if matches.is_tp[t, col]:
        iid = int(matches.matched_instance_id[t, col])
        ref = next((g for g in ground_truth if g.instance_id == iid), None)
        ref_iou = tiou(ref.segment, prediction.segment) if ref is not None else float(matches.matched_tiou[t, col])
        return ErrorVerdict(ErrorCategory.TP, alpha, iid, ref_iou)

    best = None
    best_key = None
    for g in ground_truth:
        if g.video_id != prediction.video_id:
            continue
        o = tiou(g.segment, prediction.segment)
        key = (-o, g.label != prediction.label, g.instance_id)
        if best_key is None or key < best_key:
            best, best_key = g, key
    if best is None:
        return ErrorVerdict(ErrorCategory.BG, alpha, None, 0.0)
    o = -best_key[0]
    same = best.label == prediction.label
    if o >= alpha:
        cat = ErrorCategory.DD if same else ErrorCategory.WL
    elif o >= min_overlap:
        cat = ErrorCategory.LOC if same else ErrorCategory.CON
    else:
        cat = ErrorCategory.BG
    return ErrorVerdict(cat, alpha, best.instance_id, o)


@dataclass
class VerdictTable:
    """Category codes per ``[threshold, prediction]`` plus reference instances."""

    thresholds: np.ndarray
    category: np.ndarray
    reference_index: np.ndarray
    reference_tiou: np.ndarray

    def counts(self) -> np.ndarray:
        """Category counts per threshold, shape ``(T, 6)``."""
        return np.stack([np.bincount(row, minlength=len(ErrorCategory)) for row in self.category])


def classify_predictions(
    dataset: Dataset,
    predictions: PredictionSet,
    thresholds,
    min_overlap: float = 0.1,
    matched: np.ndarray | None = None,
) -> VerdictTable:
    """Vectorised verdicts for every prediction at every threshold."""
    ev = evaluation(dataset, predictions)
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
    if matched is None:
        matched = ev.match(thresholds)
    n_t = len(thresholds)
    ref_iou = np.broadcast_to(ev.ref_iou, (n_t, ev.n_pred))
    same = np.broadcast_to(ev.ref_same, (n_t, ev.n_pred))
    alpha = thresholds[:, None]

    cat = np.full((n_t, ev.n_pred), ErrorCategory.BG, dtype=np.int8)
    near = (ref_iou >= min_overlap) & (ref_iou < alpha)
    cat[near & same] = ErrorCategory.LOC
    cat[near & ~same] = ErrorCategory.CON
    over = ref_iou >= alpha
    cat[over & same] = ErrorCategory.DD
    cat[over & ~same] = ErrorCategory.WL
    tp = matched >= 0
    cat[tp] = ErrorCategory.TP

    reference = np.where(tp, matched, ev.ref_gt[None, :])
    r_iou = ref_iou.copy()
    if tp.any():
        # TP reference tIoU is the one of the claimed instance.
        key = ev.pair_pred.astype(np.int64) * max(ev.n_gt, 1) + ev.pair_gt
        order = np.argsort(key)
        t_idx, p_idx = np.nonzero(tp)
        want = p_idx.astype(np.int64) * max(ev.n_gt, 1) + matched[t_idx, p_idx]
        pos = order[np.searchsorted(key[order], want)]
        r_iou[t_idx, p_idx] = ev.pair_iou[pos]
    return VerdictTable(thresholds, cat, reference, r_iou)


@dataclass
class FPProfile:
    """Category breakdown of the top-k·G predictions over score-ranked splits.

    ``fractions`` has shape ``(T, n_splits, 6)``; ``mean_fractions`` averages
    it over thresholds. Empty splits hold NaN.
    """

    thresholds: np.ndarray
    split_sizes: np.ndarray
    counts: np.ndarray
    fractions: np.ndarray
    mean_fractions: np.ndarray
    n_predictions: int
    n_ground_truth: int
    categories: tuple[str, ...] = CATEGORIES


def build_fp_profile(
    dataset: Dataset, predictions: PredictionSet, config: EvaluationConfig | None = None
) -> FPProfile:
    config = config or EvaluationConfig()
    top = truncate_top_k(predictions, dataset, config.top_k_factor)
    verdicts = classify_predictions(dataset, top, config.thresholds, config.min_overlap_floor)
    ranked = top.ranking()
    splits = np.array_split(ranked, config.n_splits)
    n_t, n_cat = len(config.thresholds), len(ErrorCategory)
    counts = np.zeros((n_t, config.n_splits, n_cat), dtype=np.int64)
    for s, idx in enumerate(splits):
        for t in range(n_t):
            counts[t, s] = np.bincount(verdicts.category[t, idx], minlength=n_cat)
    sizes = np.array([len(s) for s in splits], dtype=np.int64)
    with np.errstate(invalid="ignore", divide="ignore"):
        fractions = counts / sizes[None, :, None]
    fractions[:, sizes == 0, :] = np.nan
    return FPProfile(
        thresholds=config.thresholds,
        split_sizes=sizes,
        counts=counts,
        fractions=fractions,
        mean_fractions=fractions.mean(axis=0),
        n_predictions=len(top),
        n_ground_truth=len(dataset.instances),
    )


@dataclass
class ErrorImpact:
    """Average-mAP_N before and after deleting each false-positive category."""

    thresholds: np.ndarray
    baseline: float
    baseline_per_threshold: np.ndarray
    after: dict[str, float]
    after_per_threshold: dict[str, np.ndarray]

    @property
    def delta(self) -> dict[str, float]:
        return {c: self.after[c] - self.baseline for c in self.after}

    @property
    def delta_per_threshold(self) -> dict[str, np.ndarray]:
        return {c: v - self.baseline_per_threshold for c, v in self.after_per_threshold.items()}


def error_impact(
    dataset: Dataset,
    predictions: PredictionSet,
    config: EvaluationConfig | None = None,
    verdicts: VerdictTable | None = None,
) -> ErrorImpact:
    """Gain in average-mAP_N from deleting all predictions of one FP category.

    At each threshold the predictions carrying the category's verdict at that
    threshold are removed and matching is re-run on the remainder.
    """
    config = config or EvaluationConfig()
    ev = evaluation(dataset, predictions)
    norm = config.resolve_normalization(dataset)
    thresholds = config.thresholds
    matched = ev.match(thresholds)
    if verdicts is None:
        verdicts = classify_predictions(dataset, predictions, thresholds, config.min_overlap_floor, matched)
    base = ev.map_per_threshold(matched, norm, normalized=True)

    after_t: dict[str, np.ndarray] = {}
    for name in FP_CATEGORIES:
        code = ErrorCategory[name]
        vals = np.empty(len(thresholds))
        for t, alpha in enumerate(thresholds):
            keep = verdicts.category[t] != code
            if keep.all():
                vals[t] = base[t]
                continue
            m = ev.match([alpha], pred_mask=keep)
            vals[t] = ev.map_per_threshold(m, norm, pred_mask=keep, normalized=True)[0]
        after_t[name] = vals
    return ErrorImpact(
        thresholds=thresholds,
        baseline=float(base.mean()),
        baseline_per_threshold=base,
        after={k: float(v.mean()) for k, v in after_t.items()},
        after_per_threshold=after_t,
    )
