"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import numpy as np

from tadiag.dataset import Dataset, GroundTruthInstance, PredictionSet, TemporalSegment, VideoRecord, validate_instances


def seg_iou(a, b) -> float:
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union if union > 0 else 0.0


def greedy(instances, predictions, alpha):
    """``instances``: (id, video, label, start, end); ``predictions``:
    (pid, video, label, start, end, score). Returns ``{pid: instance id or None}``."""
    order = sorted(predictions, key=lambda p: (-p[5], p[0]))
    taken = set()
    out = {}
    for pid, vid, lab, s, e, _ in order:
        best, best_o = None, -1.0
        for gid, gv, gl, gs, ge in instances:
            if gv != vid or gl != lab or gid in taken:
                continue
            o = seg_iou((s, e), (gs, ge))
            if o > best_o or (o == best_o and gid < best):
                best, best_o = gid, o
        if best is not None and best_o >= alpha:
            taken.add(best)
            out[pid] = best
        else:
            out[pid] = None
    return out


def enumerated_ap(is_tp, n_gt, normalization=None) -> float:
    """AP by explicit enumeration of PR points.

    For every recall level reached by a true positive, take the maximum
    precision over all list positions whose recall is at least that level,
    and weight it by the recall increment.
    """
    n_norm = n_gt if normalization is None else normalization
    points = []
    tp = fp = 0
    for hit in is_tp:
        tp += bool(hit)
        fp += not hit
        r = tp / n_gt
        if normalization is None:
            p = tp / (tp + fp)
        else:
            p = (r * n_norm) / (r * n_norm + fp) if (r * n_norm + fp) > 0 else 0.0
        points.append((r, p, bool(hit)))
    ap = 0.0
    prev_r = 0.0
    for r, _, hit in points:
        if not hit:
            continue
        best = max(p for r2, p, _ in points if r2 >= r)
        ap += (r - prev_r) * best
        prev_r = r
    return ap


def classify(instances, prediction, tp_instance, alpha, floor=0.1):
    """Category name for one prediction given its greedy match."""
    if tp_instance is not None:
        return "TP"
    pid, vid, lab, s, e, _ = prediction
    cands = [g for g in instances if g[1] == vid]
    if not cands:
        return "BG"
    key = lambda g: (-seg_iou((s, e), (g[3], g[4])), g[2] != lab, g[0])  # noqa: E731
    g = min(cands, key=key)
    o = seg_iou((s, e), (g[3], g[4]))
    if o >= alpha:
        return "DD" if g[2] == lab else "WL"
    if o >= floor:
        return "LOC" if g[2] == lab else "CON"
    return "BG"


def build_dataset(instances, durations: dict[str, float]) -> Dataset:
    videos = [VideoRecord(v, d) for v, d in durations.items()]
    per_video: dict[str, int] = {}
    built = []
    for gid, v, lab, s, e in instances:
        k = per_video.get(v, 0)
        per_video[v] = k + 1
        built.append(GroundTruthInstance(gid, v, lab, TemporalSegment(s, e), k))
    return validate_instances(videos, built)


def build_predictions(predictions) -> PredictionSet:
    if not predictions:
        return PredictionSet.empty()
    pid, vid, lab, s, e, score = zip(*predictions)
    return PredictionSet(list(vid), list(lab), list(s), list(e), list(score), list(pid))


def random_problem(rng: np.random.Generator, max_videos=5, max_preds=20, max_gt=8, n_labels=3, grid=True):
    """Small random detection problem; integer grids provoke ties."""
    n_videos = int(rng.integers(1, max_videos + 1))
    n_gt = int(rng.integers(1, max_gt + 1))
    n_pred = int(rng.integers(0, max_preds + 1))
    labels = [f"c{j}" for j in range(n_labels)]
    durations = {f"v{i}": 20.0 for i in range(n_videos)}

    def segment():
        if grid:
            a, b = sorted(rng.choice(21, size=2, replace=False).tolist())
            return float(a), float(b)
        a, b = sorted(rng.uniform(0, 20, size=2).tolist())
        return a, max(b, a + 1e-3)

    instances = []
    for gid in range(n_gt):
        s, e = segment()
        instances.append((gid, f"v{rng.integers(n_videos)}", labels[rng.integers(n_labels)], s, e))
    predictions = []
    for pid in range(n_pred):
        if instances and rng.random() < 0.6:
            g = instances[rng.integers(len(instances))]
            vid = g[1]
            lab = g[2] if rng.random() < 0.8 else labels[rng.integers(n_labels)]
            s = max(0.0, g[3] + float(rng.integers(-3, 4)))
            e = min(20.0, g[4] + float(rng.integers(-3, 4)))
            if e <= s:
                s, e = g[3], g[4]
        else:
            vid = f"v{rng.integers(n_videos)}"
            lab = labels[rng.integers(n_labels)]
            s, e = segment()
        score = float(rng.integers(0, 5)) / 4 if grid else float(rng.random())
        predictions.append((pid, vid, lab, s, e, score))
    return instances, predictions, durations
