"""tIoU matching, precision-recall curves and (normalized) average-mAP."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import (
    Dataset,
    GroundTruthInstance,
    Prediction,
    PredictionSet,
    TemporalSegment,
    VideoRecord,
    validate_instances,
)
from .dataset import tiou as _segment_tiou

DEFAULT_TIOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
MIN_OVERLAP = 0.1


def tiou(a: TemporalSegment, b: TemporalSegment) -> float:
    """Temporal intersection over union of two segments (0 when disjoint)."""
    return _segment_tiou(a, b)


@dataclass(frozen=True)
class EvaluationConfig:
    """Evaluation knobs.

    ``normalization_constant`` of ``None`` means the mean ground-truth count
    per class, computed on the full evaluated dataset.
    """

    tiou_thresholds: tuple[float, ...] = DEFAULT_TIOU_THRESHOLDS
    normalization_constant: float | None = None
    top_k_factor: int = 10
    min_overlap_floor: float = MIN_OVERLAP
    n_splits: int = 10
    fn_precision_cutoff: float = 0.05

    def __post_init__(self) -> None:
        th = tuple(float(t) for t in self.tiou_thresholds)
        object.__setattr__(self, "tiou_thresholds", th)
        if not th:
            raise ValueError("at least one tIoU threshold is required")
        if any(not 0.0 < t <= 1.0 for t in th):
            raise ValueError(f"tIoU thresholds must lie in (0, 1]: {th}")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError(f"tIoU thresholds must be strictly increasing: {th}")
        if self.normalization_constant is not None and not self.normalization_constant > 0:
            raise ValueError("normalization constant must be positive")
        if int(self.top_k_factor) != self.top_k_factor or self.top_k_factor < 1:
            raise ValueError("top_k_factor must be a positive integer")
        if self.n_splits < 1:
            raise ValueError("n_splits must be positive")

    @property
    def thresholds(self) -> np.ndarray:
        return np.asarray(self.tiou_thresholds, dtype=np.float64)

    def resolve_normalization(self, dataset: Dataset) -> float:
        if self.normalization_constant is not None:
            return float(self.normalization_constant)
        return default_normalization(dataset)


def default_normalization(dataset: Dataset) -> float:
    """Mean number of ground-truth instances over classes that have any."""
    counts = [len(v) for v in dataset.class_index.values()]
    if not counts:
        raise ValueError("dataset has no ground-truth instances")
    return sum(counts) / len(counts)


@dataclass
class MatchTable:
    """TP/FP verdicts of every prediction at every threshold.

    Arrays indexed ``[threshold, prediction]`` follow the prediction order of
    the input collection; ``-1`` marks "no instance".
    """

    thresholds: np.ndarray
    prediction_ids: np.ndarray
    is_tp: np.ndarray
    matched_instance_id: np.ndarray
    best_tiou: np.ndarray
    best_instance_id: np.ndarray
    best_tiou_any_label: np.ndarray
    best_any_label_instance_id: np.ndarray
    best_any_label_same_label: np.ndarray
    matched_tiou: np.ndarray = field(default=None)

    def column(self, prediction_id: int) -> int:
        hits = np.flatnonzero(self.prediction_ids == prediction_id)
        if not len(hits):
            raise KeyError(f"prediction {prediction_id} not in match table")
        return int(hits[0])

    def threshold_index(self, alpha: float) -> int:
        hits = np.flatnonzero(np.isclose(self.thresholds, alpha, rtol=0, atol=1e-12))
        if not len(hits):
            raise KeyError(f"threshold {alpha} not in match table")
        return int(hits[0])


class Evaluation:
    """Pre-computed overlap structure shared by every analysis.

    Builds, once, the table of (prediction, instance) pairs that share a
    video together with their tIoU, the label vocabulary, and the score
    ranking. Matching and AP computations then only mask this structure.
    """

    def __init__(self, dataset: Dataset, predictions: PredictionSet):
        self.dataset = dataset
        self.predictions = predictions
        cols = dataset.columns()
        n_gt, n_pred = len(cols["start"]), len(predictions)
        self.n_gt, self.n_pred = n_gt, n_pred
        self.gt_instance_id = cols["instance_id"]

        labels = np.concatenate([cols["label"], predictions.label]).astype(str)
        vocab, codes = np.unique(labels, return_inverse=True) if len(labels) else (np.array([], dtype=str), np.array([], dtype=np.int64))
        self.vocabulary = vocab
        self.gt_label = codes[:n_gt].astype(np.int64)
        self.pred_label = codes[n_gt:].astype(np.int64)
        self.n_classes = len(vocab)

        videos = np.concatenate([cols["video_id"], predictions.video_id]).astype(str)
        _, vcodes = np.unique(videos, return_inverse=True) if len(videos) else (None, np.array([], dtype=np.int64))
        gt_video = vcodes[:n_gt].astype(np.int64)
        pred_video = vcodes[n_gt:].astype(np.int64)

        # Rank of each prediction in the global (score desc, id asc) order.
        order = predictions.ranking()
        self.rank = np.empty(n_pred, dtype=np.int64)
        self.rank[order] = np.arange(n_pred)
        # Class-major, rank-minor order with per-class slices.
        self.class_order = np.lexsort((self.rank, self.pred_label))
        bounds = np.searchsorted(self.pred_label[self.class_order], np.arange(self.n_classes + 1))
        self.class_slices = [slice(bounds[c], bounds[c + 1]) for c in range(self.n_classes)]

        self._build_pairs(cols, gt_video, pred_video, predictions)

    def _build_pairs(self, cols, gt_video, pred_video, predictions) -> None:
        gt_sort = np.argsort(gt_video, kind="stable")
        sorted_video = gt_video[gt_sort]
        lo = np.searchsorted(sorted_video, pred_video, side="left")
        hi = np.searchsorted(sorted_video, pred_video, side="right")
        counts = hi - lo
        pair_pred = np.repeat(np.arange(self.n_pred), counts)
        offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        pair_gt = gt_sort[np.repeat(lo, counts) + offsets]

        ps, pe = predictions.start[pair_pred], predictions.end[pair_pred]
        gs, ge = cols["start"][pair_gt], cols["end"][pair_gt]
        inter = np.minimum(pe, ge) - np.maximum(ps, gs)
        union = np.maximum(pe, ge) - np.minimum(ps, gs)
        iou = np.where(inter > 0, np.maximum(inter, 0) / union, 0.0)
        same = self.gt_label[pair_gt] == self.pred_label[pair_pred]

        self.pair_pred, self.pair_gt, self.pair_iou, self.pair_same = pair_pred, pair_gt, iou, same

        # Reference instance over all labels: max tIoU, then same label, then
        # lower instance id.
        ref_gt = np.full(self.n_pred, -1, dtype=np.int64)
        ref_iou = np.zeros(self.n_pred)
        ref_same = np.zeros(self.n_pred, dtype=bool)
        if len(pair_pred):
            o = np.lexsort((pair_gt, ~same, -iou, pair_pred))
            first = o[np.r_[True, pair_pred[o][1:] != pair_pred[o][:-1]]]
            ref_gt[pair_pred[first]] = pair_gt[first]
            ref_iou[pair_pred[first]] = iou[first]
            ref_same[pair_pred[first]] = same[first]
        self.ref_gt, self.ref_iou, self.ref_same = ref_gt, ref_iou, ref_same

        best_gt = np.full(self.n_pred, -1, dtype=np.int64)
        best_iou = np.zeros(self.n_pred)
        sp = np.flatnonzero(same)
        if len(sp):
            o = sp[np.lexsort((pair_gt[sp], -iou[sp], pair_pred[sp]))]
            first = o[np.r_[True, pair_pred[o][1:] != pair_pred[o][:-1]]]
            best_gt[pair_pred[first]] = pair_gt[first]
            best_iou[pair_pred[first]] = iou[first]
        self.best_gt, self.best_iou = best_gt, best_iou

    # -- matching ---------------------------------------------------------

    def match(self, thresholds, gt_mask=None, pred_mask=None) -> np.ndarray:
        """Greedy matching at every threshold.

        Walking predictions by (score desc, id asc), each claims the unclaimed
        same-video, same-label instance of highest tIoU if that tIoU reaches
        the threshold. Returns matched instance index per ``[threshold,
        prediction]`` (``-1`` for false positives and masked predictions).
        """
        thresholds = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
        n_t = len(thresholds)
        matched = np.full((n_t, self.n_pred), -1, dtype=np.int64)
        if not self.n_pred or not len(self.pair_pred):
            return matched

        keep = self.pair_same & (self.pair_iou >= thresholds.min())
        if gt_mask is not None:
            keep &= gt_mask[self.pair_gt]
        if pred_mask is not None:
            keep &= pred_mask[self.pair_pred]
        idx = np.flatnonzero(keep)
        if not len(idx):
            return matched
        pp, pg, pi = self.pair_pred[idx], self.pair_gt[idx], self.pair_iou[idx]

        # A component with a single instance reduces to "first eligible
        # prediction by rank wins"; only instances reachable from a
        # prediction with several candidates need the sequential walk.
        n_cand = np.bincount(pp, minlength=self.n_pred)
        complex_gt = np.zeros(self.n_gt, dtype=bool)
        complex_gt[pg[n_cand[pp] >= 2]] = True
        is_complex = complex_gt[pg]

        simple = np.flatnonzero(~is_complex)
        if len(simple):
            s = simple[np.lexsort((self.rank[pp[simple]], pg[simple]))]
            sp, sg, si = pp[s], pg[s], pi[s]
            for t, alpha in enumerate(thresholds):
                elig = si >= alpha
                eg = sg[elig]
                if not len(eg):
                    continue
                first = np.r_[True, eg[1:] != eg[:-1]]
                matched[t, sp[elig][first]] = eg[first]

        cx = np.flatnonzero(is_complex)
        if len(cx):
            self._match_sequential(pp[cx], pg[cx], pi[cx], thresholds, matched)
        return matched

    def _match_sequential(self, pp, pg, pi, thresholds, matched) -> None:
        o = np.lexsort((pg, -pi, self.rank[pp]))
        pp, pg, pi = pp[o].tolist(), pg[o].tolist(), pi[o].tolist()
        alphas = thresholds.tolist()
        claimed = [set() for _ in alphas]
        i, n = 0, len(pp)
        while i < n:
            j = i
            while j < n and pp[j] == pp[i]:
                j += 1
            p = pp[i]
            for t, alpha in enumerate(alphas):
                taken = claimed[t]
                for k in range(i, j):
                    if pi[k] < alpha:
                        break
                    if pg[k] not in taken:
                        taken.add(pg[k])
                        matched[t, p] = pg[k]
                        break
            i = j

    # -- AP ---------------------------------------------------------------

    def gt_counts(self, gt_mask=None) -> np.ndarray:
        labels = self.gt_label if gt_mask is None else self.gt_label[gt_mask]
        return np.bincount(labels, minlength=self.n_classes)

    def class_ap(self, matched, normalization, gt_mask=None, pred_mask=None, normalized=True):
        """AP per ``[threshold, class]``; NaN for classes without ground truth."""
        counts = self.gt_counts(gt_mask)
        n_t = matched.shape[0]
        ap = np.full((n_t, self.n_classes), np.nan)
        is_tp = matched >= 0
        for c in np.flatnonzero(counts):
            idx = self.class_order[self.class_slices[c]]
            if pred_mask is not None:
                idx = idx[pred_mask[idx]]
            curve = pr_curve(is_tp[:, idx], counts[c], normalization)
            ap[:, c] = interpolated_ap(curve, use_normalized=normalized)
        return ap

    def map_per_threshold(self, matched, normalization, gt_mask=None, pred_mask=None, normalized=True):
        ap = self.class_ap(matched, normalization, gt_mask, pred_mask, normalized)
        valid = self.gt_counts(gt_mask) > 0
        if not valid.any():
            raise ValueError("no class has ground-truth instances")
        return ap[:, valid].mean(axis=1)

    def match_table(self, thresholds) -> MatchTable:
        thresholds = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
        matched = self.match(thresholds)
        ids = self.gt_instance_id
        matched_tiou = np.zeros(matched.shape)
        lookup = {}
        for k in range(len(self.pair_pred)):
            if self.pair_same[k]:
                lookup[(self.pair_pred[k], self.pair_gt[k])] = self.pair_iou[k]
        for t, p in zip(*np.nonzero(matched >= 0)):
            matched_tiou[t, p] = lookup[(p, matched[t, p])]

        def to_ids(a):
            return np.where(a >= 0, ids[np.maximum(a, 0)] if len(ids) else -1, -1)

        return MatchTable(
            thresholds=thresholds,
            prediction_ids=self.predictions.prediction_id.copy(),
            is_tp=matched >= 0,
            matched_instance_id=to_ids(matched),
            best_tiou=self.best_iou.copy(),
            best_instance_id=to_ids(self.best_gt),
            best_tiou_any_label=self.ref_iou.copy(),
            best_any_label_instance_id=to_ids(self.ref_gt),
            best_any_label_same_label=self.ref_same.copy(),
            matched_tiou=matched_tiou,
        )


def evaluation(dataset: Dataset, predictions: PredictionSet) -> Evaluation:
    """Cached :class:`Evaluation` for an immutable (dataset, predictions) pair."""
    cache = predictions._cache
    key = ("evaluation", id(dataset))
    hit = cache.get(key)
    if hit is None or hit.dataset is not dataset:
        hit = Evaluation(dataset, predictions)
        cache[key] = hit
    return hit


def _as_inputs(instances, predictions):
    insts = list(instances)
    ends: dict[str, float] = {}
    for g in insts:
        ends[g.video_id] = max(ends.get(g.video_id, 0.0), g.segment.end)
    preds = predictions if isinstance(predictions, PredictionSet) else PredictionSet.from_records(predictions)
    for v, e in zip(preds.video_id, preds.end):
        ends[str(v)] = max(ends.get(str(v), 0.0), float(e))
    videos = [VideoRecord(v, d) for v, d in ends.items()]
    remapped = [
        GroundTruthInstance(i, g.video_id, g.label, g.segment, g.annotation_index)
        for i, g in enumerate(insts)
    ]
    dataset = validate_instances(videos, remapped)
    return dataset, preds, np.array([g.instance_id for g in insts], dtype=np.int64)


def match_predictions(
    instances: Sequence[GroundTruthInstance],
    predictions: Sequence[Prediction] | PredictionSet,
    alpha: float | Sequence[float],
) -> MatchTable:
    """Greedy TP/FP assignment of predictions to ground truth.

    Works for any mix of classes and videos: matching only ever pairs a
    prediction with an instance of the same video and label.
    """
    dataset, preds, original_ids = _as_inputs(instances, predictions)
    table = Evaluation(dataset, preds).match_table(alpha)
    # Report instance ids as supplied by the caller.
    for name in ("matched_instance_id", "best_instance_id", "best_any_label_instance_id"):
        a = getattr(table, name)
        setattr(table, name, np.where(a >= 0, original_ids[np.maximum(a, 0)] if len(original_ids) else -1, -1))
    return table


@dataclass
class PRCurve:
    """Cumulative counts and precisions along the score-ranked list.

    Arrays may carry leading axes (e.g. one row per threshold); the last axis
    runs over predictions in rank order.
    """

    is_tp: np.ndarray
    cumulative_tp: np.ndarray
    cumulative_fp: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    normalized_precision: np.ndarray
    n_gt: int
    normalization: float


def pr_curve(is_tp, n_gt: int, normalization: float | None = None) -> PRCurve:
    """Precision/recall along a ranked TP/FP verdict list.

    Args:
        is_tp: boolean verdicts in rank order, shape ``(..., n)``.
        n_gt: number of ground-truth instances of the class.
        normalization: constant ``N`` of the normalized precision
            ``R*N / (R*N + F)`` where ``F`` is the cumulative false-positive
            count. Defaults to ``n_gt``, for which it equals plain precision.
    """
    if n_gt <= 0:
        raise ValueError("AP is undefined for a class without ground truth")
    is_tp = np.asarray(is_tp, dtype=bool)
    norm = float(n_gt if normalization is None else normalization)
    ctp = np.cumsum(is_tp, axis=-1, dtype=np.int64)
    cfp = np.cumsum(~is_tp, axis=-1, dtype=np.int64)
    recall = ctp / n_gt
    total = ctp + cfp
    precision = np.divide(ctp, total, out=np.zeros(ctp.shape), where=total > 0)
    # R*N/(R*N+F) scaled by n_gt keeps integer products exact.
    num = ctp * norm
    den = num + cfp * float(n_gt)
    normalized = np.divide(num, den, out=np.zeros(ctp.shape), where=den > 0)
    return PRCurve(is_tp, ctp, cfp, recall, precision, normalized, int(n_gt), norm)


def interpolated_ap(curve: PRCurve, use_normalized: bool = False):
    """All-point interpolated area under the precision-recall curve.

    Precision is replaced by its running maximum from the right, then summed
    at every recall step (each true positive adds ``1/n_gt`` recall).
    """
    prec = curve.normalized_precision if use_normalized else curve.precision
    if prec.shape[-1] == 0:
        out = np.zeros(prec.shape[:-1])
        return float(out) if out.ndim == 0 else out
    envelope = np.maximum.accumulate(prec[..., ::-1], axis=-1)[..., ::-1]
    ap = np.sum(np.where(curve.is_tp, envelope, 0.0), axis=-1) / curve.n_gt
    return float(ap) if np.ndim(ap) == 0 else ap


@dataclass
class MetricSummary:
    thresholds: np.ndarray
    per_threshold_map: np.ndarray
    average: float
    per_class_ap: np.ndarray
    classes: list[str]
    normalization: float | None


def average_map(
    dataset: Dataset,
    predictions: PredictionSet,
    config: EvaluationConfig | None = None,
    use_normalized: bool = False,
) -> MetricSummary:
    """mAP per threshold and its mean over thresholds.

    Classes without ground truth are left out of the class mean.
    """
    config = config or EvaluationConfig()
    if not dataset.instances:
        raise ValueError("no classes with ground truth")
    ev = evaluation(dataset, predictions)
    norm = config.resolve_normalization(dataset)
    matched = ev.match(config.thresholds)
    ap = ev.class_ap(matched, norm, normalized=use_normalized)
    valid = ev.gt_counts() > 0
    per_t = ap[:, valid].mean(axis=1)
    return MetricSummary(
        thresholds=config.thresholds,
        per_threshold_map=per_t,
        average=float(per_t.mean()),
        per_class_ap=ap[:, valid],
        classes=[str(c) for c in ev.vocabulary[valid]],
        normalization=norm if use_normalized else None,
    )


def truncate_top_k(predictions: PredictionSet, dataset: Dataset, k: int) -> PredictionSet:
    """Keep, per class, the ``k * G_j`` best-ranked predictions.

    Classes without ground truth contribute nothing. Input order is kept.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    classes = dataset.class_index
    n = len(predictions)
    if not n:
        return predictions
    labels = predictions.label.astype(str)
    budget = np.array([k * len(classes.get(lab, ())) for lab in labels], dtype=np.int64)
    rank = np.empty(n, dtype=np.int64)
    rank[predictions.ranking()] = np.arange(n)
    order = np.lexsort((rank, labels))
    sorted_labels = labels[order]
    starts = np.r_[True, sorted_labels[1:] != sorted_labels[:-1]]
    group_start = np.maximum.accumulate(np.where(starts, np.arange(n), 0))
    position = np.arange(n) - group_start
    keep = np.zeros(n, dtype=bool)
    keep[order] = position < budget[order]
    return predictions.take(keep)
