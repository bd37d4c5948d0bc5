"""Ground truth, predictions and the six per-instance action characteristics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from statistics import median
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CHARACTERISTICS = (
    "context_size",
    "context_distance",
    "agreement",
    "coverage",
    "length",
    "num_instances",
)

# (name, lower, upper) with half-open (lower, upper] intervals.
AGREEMENT_BUCKETS = (
    ("XW", 0.0, 0.2),
    ("W", 0.2, 0.4),
    ("M", 0.4, 0.6),
    ("H", 0.6, 0.8),
    ("XH", 0.8, 1.0),
)
COVERAGE_BUCKETS = (
    ("XS", 0.0, 0.2),
    ("S", 0.2, 0.4),
    ("M", 0.4, 0.6),
    ("L", 0.6, 0.8),
    ("XL", 0.8, 1.0),
)
LENGTH_BUCKETS = (
    ("XS", 0.0, 30.0),
    ("S", 30.0, 60.0),
    ("M", 60.0, 120.0),
    ("L", 120.0, 180.0),
    ("XL", 180.0, math.inf),
)
NUM_INSTANCES_BUCKETS = (
    ("XS", 0, 1),
    ("S", 1, 4),
    ("M", 4, 8),
    ("L", 8, math.inf),
)
CONTEXT_SIZE_BUCKETS = tuple(str(i) for i in range(7))
CONTEXT_DISTANCE_BUCKETS = ("Inf", "F", "M", "N")

_CONTEXT_DISTANCE_ALIASES = {
    "inf": "Inf",
    "none": "Inf",
    "f": "F",
    "far": "F",
    "m": "M",
    "mid": "M",
    "middle": "M",
    "n": "N",
    "near": "N",
}

BUCKET_ORDER: dict[str, tuple[str, ...]] = {
    "context_size": CONTEXT_SIZE_BUCKETS,
    "context_distance": CONTEXT_DISTANCE_BUCKETS,
    "agreement": tuple(b[0] for b in AGREEMENT_BUCKETS),
    "coverage": tuple(b[0] for b in COVERAGE_BUCKETS),
    "length": tuple(b[0] for b in LENGTH_BUCKETS),
    "num_instances": tuple(b[0] for b in NUM_INSTANCES_BUCKETS),
}


class ValidationError(ValueError):
    """Raised when input records violate the data model.

    ``issues`` holds every violation found, not just the first one.
    """

    def __init__(self, issues: Sequence[str]):
        self.issues = list(issues)
        head = f"{len(self.issues)} validation issue(s)"
        super().__init__(head + ":\n  " + "\n  ".join(self.issues))


@dataclass(frozen=True)
class TemporalSegment:
    start: float
    end: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError(f"non-finite segment [{self.start}, {self.end}]")
        if self.start < 0:
            raise ValueError(f"negative segment start {self.start}")
        if self.end <= self.start:
            raise ValueError(f"inverted or zero-length segment [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    duration: float
    subset: str = ""


@dataclass(frozen=True)
class GroundTruthInstance:
    instance_id: int
    video_id: str
    label: str
    segment: TemporalSegment
    annotation_index: int = 0

    @property
    def key(self) -> str:
        """Characteristics-file key of this instance."""
        return instance_key(self.video_id, self.annotation_index)


@dataclass(frozen=True)
class Prediction:
    prediction_id: int
    video_id: str
    label: str
    segment: TemporalSegment
    score: float


def instance_key(video_id: str, annotation_index: int) -> str:
    return f"{video_id}:{annotation_index}"


def _bucket_from_table(value: float, table) -> str:
    for name, lo, hi in table:
        if lo < value <= hi:
            return name
    # (0, 0.2] leaves an exact 0 agreement uncovered; it belongs with XW.
    if value == table[0][1]:
        return table[0][0]
    raise ValueError(f"value {value} outside bucket table")


def agreement_bucket(score: float) -> str:
    return _bucket_from_table(score, AGREEMENT_BUCKETS)


def coverage_bucket(value: float) -> str:
    return _bucket_from_table(value, COVERAGE_BUCKETS)


def length_bucket(seconds: float) -> str:
    return _bucket_from_table(seconds, LENGTH_BUCKETS)


def num_instances_bucket(count: int) -> str:
    if count < 1:
        raise ValueError(f"instance count must be >= 1, got {count}")
    return _bucket_from_table(count, NUM_INSTANCES_BUCKETS)


def context_size_bucket(count: int) -> str:
    if not 0 <= count <= 6:
        raise ValueError(f"context size must lie in 0..6, got {count}")
    return str(int(count))


def normalize_context_distance(label: str) -> str:
    try:
        return _CONTEXT_DISTANCE_ALIASES[str(label).strip().lower()]
    except KeyError:
        raise ValueError(f"unknown context distance {label!r}") from None


@dataclass(frozen=True)
class CharacteristicProfile:
    """Per-instance characteristic values; ``None`` marks an absent field."""

    context_size: int | None = None
    context_distance: str | None = None
    agreement_score: float | None = None
    agreement_bucket: str | None = None
    coverage_value: float | None = None
    coverage_bucket: str | None = None
    length_seconds: float | None = None
    length_bucket: str | None = None
    num_instances: int | None = None
    num_instances_bucket: str | None = None

    def bucket(self, characteristic: str) -> str | None:
        if characteristic == "context_size":
            return None if self.context_size is None else str(self.context_size)
        if characteristic == "context_distance":
            return self.context_distance
        if characteristic in ("agreement", "coverage", "length", "num_instances"):
            return getattr(self, characteristic + "_bucket")
        raise KeyError(characteristic)

    def inconsistencies(self) -> list[str]:
        """Fields whose stored bucket disagrees with the raw value."""
        out = []
        checks = (
            ("agreement", self.agreement_score, self.agreement_bucket, agreement_bucket),
            ("coverage", self.coverage_value, self.coverage_bucket, coverage_bucket),
            ("length", self.length_seconds, self.length_bucket, length_bucket),
            ("num_instances", self.num_instances, self.num_instances_bucket, num_instances_bucket),
        )
        for name, raw, stored, fn in checks:
            if raw is not None and stored is not None and fn(raw) != stored:
                out.append(f"{name}: value {raw} belongs in {fn(raw)}, not {stored}")
        if self.context_size is not None and self.context_distance is not None:
            if (self.context_size == 0) != (self.context_distance == "Inf"):
                out.append(
                    f"context: size {self.context_size} inconsistent with distance "
                    f"{self.context_distance}"
                )
        return out


@dataclass(frozen=True)
class Dataset:
    """Validated, immutable ground truth.

    Instances are kept in file order; ``instance_id`` is their ordinal.
    """

    videos: dict[str, VideoRecord]
    instances: tuple[GroundTruthInstance, ...]
    characteristics: dict[int, CharacteristicProfile] | None = None
    warnings: tuple[str, ...] = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def class_index(self) -> dict[str, list[GroundTruthInstance]]:
        if "class_index" not in self._cache:
            index: dict[str, list[GroundTruthInstance]] = {}
            for inst in self.instances:
                index.setdefault(inst.label, []).append(inst)
            self._cache["class_index"] = dict(sorted(index.items()))
        return self._cache["class_index"]

    @property
    def labels(self) -> list[str]:
        return list(self.class_index)

    def __len__(self) -> int:
        return len(self.instances)

    def columns(self) -> dict[str, np.ndarray]:
        """Columnar view used by the vectorised evaluators."""
        if "columns" not in self._cache:
            insts = self.instances
            self._cache["columns"] = {
                "instance_id": np.array([g.instance_id for g in insts], dtype=np.int64),
                "video_id": np.array([g.video_id for g in insts], dtype=object),
                "label": np.array([g.label for g in insts], dtype=object),
                "start": np.array([g.segment.start for g in insts], dtype=np.float64),
                "end": np.array([g.segment.end for g in insts], dtype=np.float64),
            }
        return self._cache["columns"]

    def bucket_array(self, characteristic: str) -> np.ndarray:
        """Bucket label per instance (object array, ``None`` where absent)."""
        key = ("bucket", characteristic)
        if key not in self._cache:
            chars = self.characteristics or {}
            out = np.empty(len(self.instances), dtype=object)
            for i, inst in enumerate(self.instances):
                prof = chars.get(inst.instance_id)
                out[i] = None if prof is None else prof.bucket(characteristic)
            self._cache[key] = out
        return self._cache[key]

    def has_characteristic(self, characteristic: str) -> bool:
        return any(b is not None for b in self.bucket_array(characteristic))

    def with_characteristics(self, profiles: Mapping[int, CharacteristicProfile]) -> "Dataset":
        return replace(self, characteristics=dict(profiles), _cache={})

    def restrict_subset(self, subset: str | None) -> "Dataset":
        """Keep only videos tagged with ``subset`` (ids are renumbered)."""
        if subset is None:
            return self
        videos = {k: v for k, v in self.videos.items() if v.subset == subset}
        kept = [g for g in self.instances if g.video_id in videos]
        remap = {g.instance_id: i for i, g in enumerate(kept)}
        instances = tuple(replace(g, instance_id=remap[g.instance_id]) for g in kept)
        chars = None
        if self.characteristics is not None:
            chars = {
                remap[k]: v for k, v in self.characteristics.items() if k in remap
            }
        return Dataset(videos, instances, chars, self.warnings)


def compute_coverage(instance: GroundTruthInstance, video: VideoRecord | None) -> float:
    """Instance length relative to the video duration, capped at 1."""
    if video is None or video.video_id != instance.video_id:
        raise ValidationError([f"missing video record for video_id {instance.video_id!r}"])
    start = min(max(instance.segment.start, 0.0), video.duration)
    end = min(max(instance.segment.end, 0.0), video.duration)
    return min((end - start) / video.duration, 1.0)


def tiou(a: TemporalSegment, b: TemporalSegment) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = max(a.end, b.end) - min(a.start, b.start)
    return inter / union


def compute_agreement(annotations: Sequence[TemporalSegment]) -> float:
    """Median tIoU over all pairs of annotations of one instance."""
    n = len(annotations)
    if n < 2:
        raise ValueError(f"agreement needs at least 2 annotations, got {n}")
    pairwise = [
        tiou(annotations[i], annotations[j]) for i in range(n) for j in range(i + 1, n)
    ]
    return float(median(pairwise))


def derive_characteristics(
    dataset: Dataset,
    agreement_annotations: Mapping[int, Sequence[TemporalSegment] | float | str] | None = None,
    context_glimpse_counts: Mapping[int, tuple[int, str | None]] | None = None,
) -> dict[int, CharacteristicProfile]:
    """Build a characteristic profile for every instance.

    Coverage, length and instance counts come from the dataset itself.
    Agreement entries may be re-annotation segments (the original segment is
    added before taking the median), a raw score, or a bucket label. Context
    entries are ``(glimpse_count, furthest_distance_label)``. Instances absent
    from a source get ``None`` in the corresponding fields.
    """
    agreement_annotations = agreement_annotations or {}
    context_glimpse_counts = context_glimpse_counts or {}

    same_class_counts: dict[tuple[str, str], int] = {}
    for g in dataset.instances:
        key = (g.video_id, g.label)
        same_class_counts[key] = same_class_counts.get(key, 0) + 1

    profiles: dict[int, CharacteristicProfile] = {}
    for g in dataset.instances:
        video = dataset.videos.get(g.video_id)
        cov = compute_coverage(g, video)
        length = g.segment.length
        count = same_class_counts[(g.video_id, g.label)]

        a_score: float | None = None
        a_bucket: str | None = None
        entry = agreement_annotations.get(g.instance_id)
        if isinstance(entry, str):
            a_bucket = entry.strip().upper()
            if a_bucket not in BUCKET_ORDER["agreement"]:
                raise ValueError(f"unknown agreement bucket {entry!r}")
        elif isinstance(entry, (int, float)):
            a_score = float(entry)
            a_bucket = agreement_bucket(a_score)
        elif entry is not None:
            a_score = compute_agreement([g.segment, *entry])
            a_bucket = agreement_bucket(a_score)

        c_size: int | None = None
        c_dist: str | None = None
        ctx = context_glimpse_counts.get(g.instance_id)
        if ctx is not None:
            c_size = int(ctx[0])
            context_size_bucket(c_size)
            if c_size == 0:
                c_dist = "Inf"
            elif ctx[1] is not None:
                c_dist = normalize_context_distance(ctx[1])

        profiles[g.instance_id] = CharacteristicProfile(
            context_size=c_size,
            context_distance=c_dist,
            agreement_score=a_score,
            agreement_bucket=a_bucket,
            coverage_value=cov,
            coverage_bucket=coverage_bucket(cov),
            length_seconds=length,
            length_bucket=length_bucket(length),
            num_instances=count,
            num_instances_bucket=num_instances_bucket(count),
        )
    return profiles


def _as_segment(raw, where: str, issues: list[str]) -> tuple[float, float] | None:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        issues.append(f"{where}: segment must be a [start, end] pair")
        return None
    try:
        start, end = float(raw[0]), float(raw[1])
    except (TypeError, ValueError):
        issues.append(f"{where}: segment bounds must be numbers")
        return None
    if not (math.isfinite(start) and math.isfinite(end)):
        issues.append(f"{where}: non-finite segment bound")
        return None
    return start, end


def validate_dataset(raw: Mapping) -> Dataset:
    """Validate an ActivityNet-style ground-truth document.

    Args:
        raw: parsed JSON with a top-level ``"database"`` object.

    Returns:
        The validated :class:`Dataset`. Segments that overshoot the video are
        clamped to ``[0, duration]`` and reported in ``Dataset.warnings``.

    Raises:
        ValidationError: with the complete list of violations found.
    """
    issues: list[str] = []
    warnings: list[str] = []
    if not isinstance(raw, Mapping) or not isinstance(raw.get("database"), Mapping):
        raise ValidationError(["database: missing top-level 'database' object"])

    videos: dict[str, VideoRecord] = {}
    instances: list[GroundTruthInstance] = []
    for video_id, entry in raw["database"].items():
        where = f"database.{video_id}"
        if not isinstance(entry, Mapping):
            issues.append(f"{where}: video entry must be an object")
            continue
        try:
            duration = float(entry.get("duration"))
        except (TypeError, ValueError):
            issues.append(f"{where}.duration: missing or not a number")
            continue
        if not math.isfinite(duration) or duration <= 0:
            issues.append(f"{where}.duration: must be > 0, got {duration}")
            continue
        subset = entry.get("subset", "")
        videos[video_id] = VideoRecord(video_id, duration, str(subset))

        annotations = entry.get("annotations", [])
        if not isinstance(annotations, list):
            issues.append(f"{where}.annotations: must be a list")
            continue
        for idx, ann in enumerate(annotations):
            awhere = f"{where}.annotations[{idx}]"
            if not isinstance(ann, Mapping):
                issues.append(f"{awhere}: annotation must be an object")
                continue
            label = ann.get("label")
            if not isinstance(label, str) or not label:
                issues.append(f"{awhere}.label: missing or not a string")
            seg = _as_segment(ann.get("segment"), awhere + ".segment", issues)
            if seg is None or not isinstance(label, str) or not label:
                continue
            start, end = seg
            if end <= start:
                kind = "zero-length" if end == start else "inverted"
                issues.append(f"{awhere}.segment: {kind} segment [{start}, {end}] in video {video_id}")
                continue
            if start < 0 or end > duration:
                c_start, c_end = max(start, 0.0), min(end, duration)
                if c_end <= c_start:
                    issues.append(
                        f"{awhere}.segment: [{start}, {end}] lies outside video {video_id} "
                        f"of duration {duration}"
                    )
                    continue
                msg = (
                    f"{awhere}.segment: [{start}, {end}] clamped to [{c_start}, {c_end}] "
                    f"(video duration {duration})"
                )
                logger.warning(msg)
                warnings.append(msg)
                start, end = c_start, c_end
            instances.append(
                GroundTruthInstance(
                    instance_id=len(instances),
                    video_id=video_id,
                    label=label,
                    segment=TemporalSegment(start, end),
                    annotation_index=idx,
                )
            )

    if issues:
        raise ValidationError(issues)
    return Dataset(videos, tuple(instances), None, tuple(warnings))


def validate_instances(
    videos: Iterable[VideoRecord], instances: Iterable[GroundTruthInstance]
) -> Dataset:
    """Check an already-constructed instance list against its videos."""
    video_map = {v.video_id: v for v in videos}
    insts = tuple(instances)
    issues = []
    seen: set[int] = set()
    for g in insts:
        if g.instance_id in seen:
            issues.append(f"instance {g.instance_id}: duplicate instance_id")
        seen.add(g.instance_id)
        if g.video_id not in video_map:
            issues.append(f"instance {g.instance_id}: unknown video_id {g.video_id!r}")
        elif g.segment.end > video_map[g.video_id].duration:
            issues.append(
                f"instance {g.instance_id}: segment ends after video {g.video_id} "
                f"({g.segment.end} > {video_map[g.video_id].duration})"
            )
    if issues:
        raise ValidationError(issues)
    ordered = tuple(sorted(insts, key=lambda g: g.instance_id))
    if [g.instance_id for g in ordered] != list(range(len(ordered))):
        ordered = tuple(replace(g, instance_id=i) for i, g in enumerate(ordered))
    return Dataset(video_map, ordered)


class PredictionSet:
    """Immutable, columnar collection of predictions.

    ``prediction_id`` preserves input file order and breaks score ties.
    """

    __slots__ = ("video_id", "label", "start", "end", "score", "prediction_id", "warnings", "_cache")

    def __init__(
        self,
        video_id,
        label,
        start,
        end,
        score,
        prediction_id=None,
        warnings: Sequence[str] = (),
    ):
        self.video_id = np.asarray(video_id, dtype=object)
        self.label = np.asarray(label, dtype=object)
        self.start = np.asarray(start, dtype=np.float64)
        self.end = np.asarray(end, dtype=np.float64)
        self.score = np.asarray(score, dtype=np.float64)
        n = len(self.score)
        if prediction_id is None:
            prediction_id = np.arange(n, dtype=np.int64)
        self.prediction_id = np.asarray(prediction_id, dtype=np.int64)
        for arr in (self.video_id, self.label, self.start, self.end, self.prediction_id):
            if len(arr) != n:
                raise ValueError("prediction columns differ in length")
        if n and not np.all(np.isfinite(self.score)):
            raise ValueError("prediction scores must be finite")
        if n and not np.all(self.end > self.start):
            raise ValueError("prediction segments must have end > start")
        self.warnings = tuple(warnings)
        self._cache: dict = {}

    @classmethod
    def from_records(cls, records: Iterable[Prediction]) -> "PredictionSet":
        recs = list(records)
        return cls(
            [p.video_id for p in recs],
            [p.label for p in recs],
            [p.segment.start for p in recs],
            [p.segment.end for p in recs],
            [p.score for p in recs],
            [p.prediction_id for p in recs],
        )

    @classmethod
    def empty(cls) -> "PredictionSet":
        return cls([], [], [], [], [])

    def __len__(self) -> int:
        return len(self.score)

    def __iter__(self) -> Iterator[Prediction]:
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> Prediction:
        return Prediction(
            int(self.prediction_id[i]),
            str(self.video_id[i]),
            str(self.label[i]),
            TemporalSegment(float(self.start[i]), float(self.end[i])),
            float(self.score[i]),
        )

    def take(self, index) -> "PredictionSet":
        """Sub-collection selected by a boolean mask or index array."""
        return PredictionSet(
            self.video_id[index],
            self.label[index],
            self.start[index],
            self.end[index],
            self.score[index],
            self.prediction_id[index],
        )

    def ranking(self) -> np.ndarray:
        """Indices sorted by score descending, prediction_id ascending."""
        if "ranking" not in self._cache:
            self._cache["ranking"] = np.lexsort((self.prediction_id, -self.score))
        return self._cache["ranking"]

    def with_scores(self, score) -> "PredictionSet":
        return PredictionSet(
            self.video_id, self.label, self.start, self.end, score, self.prediction_id
        )
