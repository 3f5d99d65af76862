"""Evaluation protocol for 3D visual query localization.

Every query contributes exactly one predicted response track (Top-1). The
ground truth for a query is its most recent visible segment. Predictions
are ranked across queries by confidence (ties broken by ``query_id``) and
average precision is the all-points interpolated area under the PR curve,
with the number of ground-truth queries as the recall denominator.

AP is accumulated in exact rational arithmetic, so the value depends only
on the ranked TP/FP pattern, never on summation order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .geom3d import Box9, iou3d

TAP_THRESHOLDS = (0.25, 0.50, 0.75, 0.95)
STAP_THRESHOLDS = (0.05, 0.25, 0.50, 0.75, 0.95)
SUCCESS_THRESHOLD = 0.05
RECOVERY_IOU = 0.5
REPORT_SCHEMA = "vql3d.report/1"


class ScoringError(ValueError):
    """Prediction set cannot be scored against the given ground truth."""


@dataclass(frozen=True)
class TemporalInterval:
    """Inclusive frame interval ``[start_frame, end_frame]``."""

    start_frame: int
    end_frame: int

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame < self.start_frame:
            raise ValueError(f"invalid interval [{self.start_frame}, {self.end_frame}]")

    def __len__(self) -> int:
        return self.end_frame - self.start_frame + 1

    def frames(self) -> range:
        return range(self.start_frame, self.end_frame + 1)

    def __contains__(self, t: int) -> bool:
        return self.start_frame <= t <= self.end_frame


@dataclass(frozen=True)
class ResponseTrack:
    query_id: str
    interval: TemporalInterval
    boxes: Mapping[int, Box9]
    confidence: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.confidence):
            raise ValueError(f"{self.query_id}: confidence must be finite")
        missing = [t for t in self.interval.frames() if t not in self.boxes]
        if missing:
            raise ValueError(f"{self.query_id}: no box for frames {missing[:5]}")
        extra = [t for t in self.boxes if t not in self.interval]
        if extra:
            raise ValueError(f"{self.query_id}: boxes outside interval at {sorted(extra)[:5]}")

    @classmethod
    def from_boxes(cls, query_id: str, start: int, boxes: Sequence[Box9],
                   confidence: float = 1.0) -> "ResponseTrack":
        interval = TemporalInterval(start, start + len(boxes) - 1)
        return cls(query_id, interval, {start + i: b for i, b in enumerate(boxes)}, confidence)


def tiou(pred: TemporalInterval, gt: TemporalInterval) -> float:
    """Temporal IoU with inclusive frame counting."""
    inter = min(pred.end_frame, gt.end_frame) - max(pred.start_frame, gt.start_frame) + 1
    if inter <= 0:
        return 0.0
    union = len(pred) + len(gt) - inter
    return inter / union


def frame_ious(pred: ResponseTrack | None, gt: ResponseTrack) -> list[float]:
    """Per-frame 3D IoU over the ground-truth frames (0 where nothing is predicted)."""
    out = []
    for t in gt.interval.frames():
        pb = None if pred is None else pred.boxes.get(t)
        out.append(0.0 if pb is None else iou3d(pb, gt.boxes[t]))
    return out


def stiou(pred: ResponseTrack | None, gt: ResponseTrack) -> float:
    """Mean per-frame 3D IoU over the ground-truth frames.

    Predicted frames outside the ground-truth interval do not contribute.
    """
    ious = frame_ious(pred, gt)
    return math.fsum(ious) / len(ious)


def average_precision(ranked: Iterable[Sequence], num_gt: int) -> float:
    """All-points interpolated AP.

    ``ranked`` holds ``(confidence, is_true_positive)`` or
    ``(confidence, is_true_positive, tie_key)`` items. They are sorted by
    descending confidence, then by ``tie_key``. An empty list scores 0.

    >>> average_precision([(0.9, True), (0.8, False), (0.7, True)], 3)
    0.5555555555555556
    """
    if num_gt < 1:
        raise ValueError("num_gt must be >= 1")
    items = list(ranked)
    for it in items:
        if not math.isfinite(float(it[0])):
            raise ValueError(f"non-finite confidence {it[0]!r}")
    items.sort(key=lambda it: (-float(it[0]),) + tuple(it[2:]))
    flags = [bool(it[1]) for it in items]
    if sum(flags) > num_gt:
        raise ValueError(f"{sum(flags)} true positives exceed {num_gt} ground truths")
    precisions = []
    tp = 0
    for k, hit in enumerate(flags, start=1):
        tp += hit
        precisions.append(Fraction(tp, k))
    best = Fraction(0)
    area = Fraction(0)
    for k in range(len(flags) - 1, -1, -1):
        best = max(best, precisions[k])
        if flags[k]:
            area += best
    return float(area / num_gt)


@dataclass(frozen=True)
class QueryResult:
    """Per-query evaluation record."""

    query_id: str
    matched: bool
    confidence: float
    tiou: float
    stiou: float
    recovered_frames: int
    gt_frames: int

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "matched": self.matched,
            "confidence": self.confidence,
            "tiou": self.tiou,
            "stiou": self.stiou,
            "recovered_frames": self.recovered_frames,
            "gt_frames": self.gt_frames,
        }


def evaluate_query(pred: ResponseTrack | None, gt: ResponseTrack) -> QueryResult:
    ious = frame_ious(pred, gt)
    return QueryResult(
        query_id=gt.query_id,
        matched=pred is not None,
        confidence=0.0 if pred is None else float(pred.confidence),
        tiou=0.0 if pred is None else tiou(pred.interval, gt.interval),
        stiou=math.fsum(ious) / len(ious),
        recovered_frames=sum(1 for v in ious if v >= RECOVERY_IOU),
        gt_frames=len(ious),
    )


def _ap_suite(results: Sequence[QueryResult], attr: str, thresholds) -> dict[float, float]:
    num_gt = len(results)
    aps = {}
    for thr in thresholds:
        ranked = [
            (r.confidence, getattr(r, attr) >= thr, r.query_id) for r in results if r.matched
        ]
        aps[thr] = average_precision(ranked, num_gt) if num_gt else 0.0
    return aps


def _index(tracks) -> dict[str, ResponseTrack]:
    if isinstance(tracks, Mapping):
        return dict(tracks)
    out: dict[str, ResponseTrack] = {}
    for tr in tracks:
        if hasattr(tr, "response_track"):
            tr = tr.response_track()
        if tr.query_id in out:
            raise ScoringError(f"duplicate track for query {tr.query_id!r}")
        out[tr.query_id] = tr
    return out


def _check_matched(preds: dict, gts: dict) -> None:
    orphans = sorted(set(preds) - set(gts))
    if orphans:
        raise ScoringError(f"predictions for unknown queries: {', '.join(orphans)}")


def evaluate_queries(preds, gts, workers: int = 1) -> list[QueryResult]:
    """Per-query results sorted by ``query_id``."""
    preds, gts = _index(preds), _index(gts)
    _check_matched(preds, gts)
    qids = sorted(gts)
    pairs = [(preds.get(q), gts[q]) for q in qids]
    if workers > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(pairs) // (4 * workers))
            return list(pool.map(_evaluate_pair, pairs, chunksize=chunk))
    return [evaluate_query(p, g) for p, g in pairs]


def _evaluate_pair(pair):
    return evaluate_query(*pair)


def compute_tap(preds, gts, thresholds=TAP_THRESHOLDS) -> tuple[dict[float, float], float]:
    """Temporal AP per tIoU threshold and their mean."""
    aps = _ap_suite(evaluate_queries(preds, gts), "tiou", thresholds)
    return aps, _mean(aps.values())


def compute_stap(preds, gts, thresholds=STAP_THRESHOLDS) -> tuple[dict[float, float], float]:
    """Spatio-temporal AP per stIoU threshold and their mean."""
    aps = _ap_suite(evaluate_queries(preds, gts), "stiou", thresholds)
    return aps, _mean(aps.values())


def _success(results: Sequence[QueryResult]) -> float:
    if not results:
        return 0.0
    return 100.0 * sum(1 for r in results if r.stiou >= SUCCESS_THRESHOLD) / len(results)


def _recovery(results: Sequence[QueryResult]) -> float:
    total = sum(r.gt_frames for r in results)
    if not total:
        return 0.0
    return 100.0 * sum(r.recovered_frames for r in results) / total


def _recovery_macro(results: Sequence[QueryResult]) -> float:
    if not results:
        return 0.0
    return 100.0 * math.fsum(r.recovered_frames / r.gt_frames for r in results) / len(results)


def success_rate(preds, gts) -> float:
    """Percentage of queries with stIoU >= 0.05."""
    return _success(evaluate_queries(preds, gts))


def recovery_rate(preds, gts) -> float:
    """Percentage of ground-truth frames (pooled over queries) with IoU >= 0.5."""
    return _recovery(evaluate_queries(preds, gts))


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


@dataclass(frozen=True)
class MetricReport:
    tap: float
    tap_per_threshold: dict[float, float]
    stap: float
    stap_per_threshold: dict[float, float]
    success: float
    recovery: float
    recovery_macro: float
    queries: tuple[QueryResult, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "thresholds": {
                "tiou": list(self.tap_per_threshold),
                "stiou": list(self.stap_per_threshold),
                "success_stiou": SUCCESS_THRESHOLD,
                "recovery_iou": RECOVERY_IOU,
            },
            "tAP": self.tap,
            "tAP_per_threshold": {f"{k:.2f}": v for k, v in self.tap_per_threshold.items()},
            "stAP": self.stap,
            "stAP_per_threshold": {f"{k:.2f}": v for k, v in self.stap_per_threshold.items()},
            "success": self.success,
            "recovery": self.recovery,
            "recovery_macro": self.recovery_macro,
            "num_queries": len(self.queries),
            "num_predictions": sum(1 for q in self.queries if q.matched),
            "per_query": [q.to_dict() for q in self.queries],
        }


def score(preds, annotations, workers: int = 1,
          tap_thresholds=TAP_THRESHOLDS, stap_thresholds=STAP_THRESHOLDS) -> MetricReport:
    """Score a Top-1 prediction set.

    ``annotations`` may be ground-truth :class:`ResponseTrack` objects or
    anything with a ``response_track()`` method (sequence annotations).
    Raises :class:`ScoringError` for predictions whose query is unknown.
    """
    results = evaluate_queries(preds, annotations, workers=workers)
    tap = _ap_suite(results, "tiou", tap_thresholds)
    stap = _ap_suite(results, "stiou", stap_thresholds)
    return MetricReport(
        tap=_mean(tap.values()),
        tap_per_threshold=tap,
        stap=_mean(stap.values()),
        stap_per_threshold=stap,
        success=_success(results),
        recovery=_recovery(results),
        recovery_macro=_recovery_macro(results),
        queries=tuple(results),
    )
