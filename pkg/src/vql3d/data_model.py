"""Annotation and prediction documents, dataset statistics and a synthetic generator.

Documents are JSON Lines (UTF-8), one object per sequence or query. An
optional first line ``{"schema": ..., "config": {...}}`` carries the
schema version and, for generated files, the generator configuration.

Annotation record::

    {"sequence_id": "seq0000", "fps": 20.0, "frames": 120,
     "query": {"box9": [9 reals], "source": "template:seq0000"},
     "segments": [{"start": 3, "end": 17, "boxes": [[9 reals], ...]}, ...],
     "most_recent_frame": 97,
     "modalities": {"rgb": true, "pc": true, "depth": true}}

Prediction record::

    {"query_id": "seq0000", "confidence": 0.83, "start": 80, "end": 97,
     "boxes": [[9 reals], ...]}

Boxes are ``(x, y, z, l, w, h, yaw, pitch, roll)`` in meters and radians.

The query is issued at the last frame of the sequence, so the
query-response separation is ``d_sep = (frames - 1) - most_recent_frame``;
a sequence of 120 frames whose last segment ends at frame 97 has
``d_sep = 22``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .anchor_head import (AnchorGrid, DEFAULT_WORKSPACE, HeadOutput, assign_positives,
                          build_grid, encode)
from .geom3d import Box9
from .metrics import ResponseTrack, TemporalInterval

ANNOTATION_SCHEMA = "vql3d.annotations/1"
PREDICTION_SCHEMA = "vql3d.predictions/1"
STATS_SCHEMA = "vql3d.stats/1"
DEFAULT_FPS = 20.0


class ValidationError(ValueError):
    """A document failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) if self.errors else "invalid document")


@dataclass(frozen=True)
class Segment:
    interval: TemporalInterval
    boxes: tuple[Box9, ...]

    @property
    def start(self) -> int:
        return self.interval.start_frame

    @property
    def end(self) -> int:
        return self.interval.end_frame


@dataclass(frozen=True)
class QueryDef:
    box: Box9
    source: str = ""


@dataclass(frozen=True)
class SequenceAnnotation:
    sequence_id: str
    frame_count: int
    query: QueryDef
    segments: tuple[Segment, ...]
    most_recent_frame: int
    fps: float = DEFAULT_FPS
    modalities: dict = field(default_factory=lambda: {"rgb": True, "pc": True, "depth": True})

    def problems(self) -> list[str]:
        sid = self.sequence_id
        errs = []
        if self.frame_count < 1:
            errs.append(f"{sid}: frame count must be >= 1")
        if not self.segments:
            errs.append(f"{sid}: no response segments")
            return errs
        prev_end = -1
        for i, seg in enumerate(self.segments):
            if seg.start <= prev_end:
                errs.append(f"{sid}: segment {i} [{seg.start},{seg.end}] overlaps or precedes "
                            f"the previous segment ending at {prev_end}")
            if seg.end >= self.frame_count:
                errs.append(f"{sid}: segment {i} ends at {seg.end}, beyond the last frame "
                            f"{self.frame_count - 1}")
            if len(seg.boxes) != len(seg.interval):
                errs.append(f"{sid}: segment {i} has {len(seg.boxes)} boxes for "
                            f"{len(seg.interval)} frames")
            prev_end = max(prev_end, seg.end)
        if self.most_recent_frame != self.segments[-1].end:
            errs.append(f"{sid}: most_recent_frame {self.most_recent_frame} is not the end of "
                        f"the last segment ({self.segments[-1].end})")
        return errs

    def response_track(self) -> ResponseTrack:
        """Ground-truth track: the most recent segment."""
        seg = self.segments[-1]
        return ResponseTrack(self.sequence_id, seg.interval,
                             {seg.start + i: b for i, b in enumerate(seg.boxes)}, 1.0)

    def boxes_by_frame(self) -> dict[int, Box9]:
        out = {}
        for seg in self.segments:
            for i, b in enumerate(seg.boxes):
                out[seg.start + i] = b
        return out


@dataclass
class PredictionDocument:
    tracks: dict[str, ResponseTrack] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tracks)


# --------------------------------------------------------------------------
# parsing and serialization
# --------------------------------------------------------------------------


def _lines(document) -> list[tuple[int, str]]:
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    if isinstance(document, str):
        document = document.splitlines()
    return [(i + 1, ln) for i, ln in enumerate(document) if ln.strip()]


def _records(document, schema: str, errors: list[str]) -> list[tuple[int, dict]]:
    out = []
    for lineno, line in _lines(document):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"line {lineno}: not valid JSON ({exc.msg})")
            continue
        if not isinstance(rec, dict):
            errors.append(f"line {lineno}: expected an object")
            continue
        if "schema" in rec:
            if rec["schema"] != schema:
                errors.append(f"line {lineno}: unsupported schema {rec['schema']!r}")
            continue
        out.append((lineno, rec))
    return out


def _box(values, where: str, errors: list[str]) -> Box9 | None:
    try:
        return Box9.from_array(values)
    except (TypeError, ValueError) as exc:
        errors.append(f"{where}: bad box ({exc})")
        return None


def _int(rec: dict, key: str, where: str, errors: list[str]) -> int | None:
    v = rec.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        errors.append(f"{where}: '{key}' must be an integer")
        return None
    return v


def parse_annotations(document) -> list[SequenceAnnotation]:
    """Parse and validate an annotations document (text, bytes or lines).

    Raises :class:`ValidationError` listing every problem found.
    """
    errors: list[str] = []
    out = []
    seen = set()
    for lineno, rec in _records(document, ANNOTATION_SCHEMA, errors):
        where = f"line {lineno}"
        sid = rec.get("sequence_id")
        if not isinstance(sid, str) or not sid:
            errors.append(f"{where}: missing sequence_id")
            continue
        where = f"{where} ({sid})"
        if sid in seen:
            errors.append(f"{where}: duplicate sequence_id")
            continue
        seen.add(sid)
        n_err = len(errors)
        frames = _int(rec, "frames", where, errors)
        mrf = _int(rec, "most_recent_frame", where, errors)
        q = rec.get("query") or {}
        if not isinstance(q, dict):
            errors.append(f"{where}: query must be an object")
            q = {}
        qbox = _box(q.get("box9"), f"{where} query", errors)
        segs = []
        raw_segments = rec.get("segments") or []
        if not isinstance(raw_segments, list):
            errors.append(f"{where}: segments must be a list")
            raw_segments = []
        for i, s in enumerate(raw_segments):
            if not isinstance(s, dict):
                errors.append(f"{where} segment {i}: expected an object")
                continue
            start = _int(s, "start", f"{where} segment {i}", errors)
            end = _int(s, "end", f"{where} segment {i}", errors)
            if start is None or end is None:
                continue
            try:
                interval = TemporalInterval(start, end)
            except ValueError as exc:
                errors.append(f"{where} segment {i}: {exc}")
                continue
            boxes = [_box(b, f"{where} segment {i} box {j}", errors)
                     for j, b in enumerate(s.get("boxes") or [])]
            segs.append(Segment(interval, tuple(b for b in boxes if b is not None)))
        if len(errors) > n_err:
            continue
        ann = SequenceAnnotation(
            sequence_id=sid,
            frame_count=frames,
            query=QueryDef(qbox, str(q.get("source", ""))),
            segments=tuple(segs),
            most_recent_frame=mrf,
            fps=float(rec.get("fps", DEFAULT_FPS)),
            modalities=dict(rec.get("modalities") or {"rgb": True, "pc": True, "depth": True}),
        )
        problems = ann.problems()
        if problems:
            errors.extend(f"{where}: {p}" for p in problems)
            continue
        out.append(ann)
    if errors:
        raise ValidationError(errors)
    return out


def parse_predictions(document) -> PredictionDocument:
    """Parse a predictions document; at most one track per query (Top-1)."""
    errors: list[str] = []
    tracks: dict[str, ResponseTrack] = {}
    for lineno, rec in _records(document, PREDICTION_SCHEMA, errors):
        where = f"line {lineno}"
        qid = rec.get("query_id")
        if not isinstance(qid, str) or not qid:
            errors.append(f"{where}: missing query_id")
            continue
        where = f"{where} ({qid})"
        if qid in tracks:
            errors.append(f"{where}: duplicate prediction for query (Top-1 allows one)")
            continue
        n_err = len(errors)
        start = _int(rec, "start", where, errors)
        end = _int(rec, "end", where, errors)
        conf = rec.get("confidence")
        if isinstance(conf, bool) or not isinstance(conf, (int, float)) \
                or not math.isfinite(conf):
            errors.append(f"{where}: confidence must be a finite number")
        boxes = [_box(b, f"{where} box {j}", errors) for j, b in enumerate(rec.get("boxes") or [])]
        if len(errors) > n_err:
            continue
        try:
            interval = TemporalInterval(start, end)
            if len(boxes) != len(interval):
                raise ValueError(f"{len(boxes)} boxes for {len(interval)} frames")
            tracks[qid] = ResponseTrack(qid, interval,
                                        {start + i: b for i, b in enumerate(boxes)}, float(conf))
        except ValueError as exc:
            errors.append(f"{where}: {exc}")
    if errors:
        raise ValidationError(errors)
    return PredictionDocument(tracks)


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=False)


def annotation_record(a: SequenceAnnotation) -> dict:
    return {
        "sequence_id": a.sequence_id,
        "fps": a.fps,
        "frames": a.frame_count,
        "query": {"box9": a.query.box.to_list(), "source": a.query.source},
        "segments": [
            {"start": s.start, "end": s.end, "boxes": [b.to_list() for b in s.boxes]}
            for s in a.segments
        ],
        "most_recent_frame": a.most_recent_frame,
        "modalities": dict(a.modalities),
    }


def prediction_record(t: ResponseTrack) -> dict:
    return {
        "query_id": t.query_id,
        "confidence": float(t.confidence),
        "start": t.interval.start_frame,
        "end": t.interval.end_frame,
        "boxes": [t.boxes[f].to_list() for f in t.interval.frames()],
    }


def dump_annotations(annotations: Iterable[SequenceAnnotation], config: dict | None = None) -> str:
    lines = [_dumps({"schema": ANNOTATION_SCHEMA, "config": config or {}})]
    lines += [_dumps(annotation_record(a)) for a in annotations]
    return "\n".join(lines) + "\n"


def dump_predictions(tracks, config: dict | None = None) -> str:
    if isinstance(tracks, PredictionDocument):
        tracks = tracks.tracks
    if isinstance(tracks, dict):
        tracks = [tracks[k] for k in sorted(tracks)]
    lines = [_dumps({"schema": PREDICTION_SCHEMA, "config": config or {}})]
    lines += [_dumps(prediction_record(t)) for t in tracks]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------


def sep_distance(a: SequenceAnnotation) -> int:
    """Frames between the end of the most recent segment and the query (last frame)."""
    return (a.frame_count - 1) - a.most_recent_frame


@dataclass(frozen=True)
class Histogram:
    name: str
    edges: np.ndarray
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {"name": self.name, "edges": [float(e) for e in self.edges],
                "counts": [int(c) for c in self.counts]}


# bin widths: frames, frames, meters, degrees, meters
STAT_BIN_WIDTHS = {"d_sep": 10.0, "segment": 20.0, "size": 0.1, "angle": 15.0, "center": 0.5}


def fixed_width_histogram(name: str, values, width: float) -> Histogram:
    """Histogram with edges on multiples of ``width`` covering every value."""
    v = np.asarray(values, dtype=float)
    start = math.floor(v.min() / width) * width
    nbins = max(1, math.ceil((v.max() - start) / width))
    edges = start + np.arange(nbins + 1) * width
    if edges[-1] < v.max():
        edges = np.append(edges, edges[-1] + width)
    counts, _ = np.histogram(v, bins=edges)
    return Histogram(name, edges, counts)


@dataclass(frozen=True)
class SplitStats:
    histograms: dict[str, Histogram]
    sequences: int
    boxes: int
    out_of_workspace: int

    def to_dict(self) -> dict:
        return {
            "schema": STATS_SCHEMA,
            "sequences": self.sequences,
            "boxes": self.boxes,
            "out_of_workspace": self.out_of_workspace,
            "histograms": [self.histograms[k].to_dict() for k in self.histograms],
        }


def compute_stats(annotations: Iterable[SequenceAnnotation], workspace=DEFAULT_WORKSPACE) -> SplitStats:
    anns = list(annotations)
    if not anns:
        raise ValueError("no annotations to summarize")
    boxes = np.array([b.to_array() for a in anns for s in a.segments for b in s.boxes])
    starts = [s.start for a in anns for s in a.segments]
    ends = [s.end for a in anns for s in a.segments]
    w = STAT_BIN_WIDTHS
    series = [
        ("d_sep", [sep_distance(a) for a in anns], w["d_sep"]),
        ("segment_start", starts, w["segment"]),
        ("segment_end", ends, w["segment"]),
        ("size_l", boxes[:, 3], w["size"]),
        ("size_w", boxes[:, 4], w["size"]),
        ("size_h", boxes[:, 5], w["size"]),
        ("roll_deg", np.degrees(boxes[:, 8]), w["angle"]),
        ("pitch_deg", np.degrees(boxes[:, 7]), w["angle"]),
        ("yaw_deg", np.degrees(boxes[:, 6]), w["angle"]),
        ("center_x", boxes[:, 0], w["center"]),
        ("center_y", boxes[:, 1], w["center"]),
        ("center_z", boxes[:, 2], w["center"]),
    ]
    hists = {name: fixed_width_histogram(name, vals, width) for name, vals, width in series}
    lo, hi = np.asarray(workspace[0]), np.asarray(workspace[1])
    outside = int(np.sum(np.any((boxes[:, :3] < lo) | (boxes[:, :3] > hi), axis=1)))
    return SplitStats(hists, len(anns), len(boxes), outside)


# --------------------------------------------------------------------------
# synthetic sequences
# --------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sequence_seed(master: int, index: int, stream: int = 0) -> int:
    """Seed of sequence ``index``: the splitmix64 stream of ``master``, one draw per (index, stream)."""
    return splitmix64((master + (3 * index + stream) * _GOLDEN) & _MASK64)


@dataclass(frozen=True)
class SynthConfig:
    num_sequences: int = 20
    min_frames: int = 40
    max_frames: int = 390
    min_segments: int = 1
    max_segments: int = 5
    min_segment_length: int = 5
    min_gap: int = 1
    max_dsep: int = 100
    workspace: tuple = DEFAULT_WORKSPACE
    size_range: tuple[float, float] = (0.2, 1.2)
    max_tilt: float = 0.2
    fps: float = DEFAULT_FPS
    center_jitter: float = 0.0
    size_jitter: float = 0.0
    angle_jitter: float = 0.0
    temporal_shift: int = 0
    confidence: str = "uniform"
    emit_head: bool = False
    head_margin: int = 5
    grid_counts: tuple[int, int, int] = (16, 16, 16)

    def problems(self) -> list[str]:
        errs = []
        if self.num_sequences < 1:
            errs.append("num_sequences must be >= 1")
        if not 1 <= self.min_segments <= self.max_segments:
            errs.append("need 1 <= min_segments <= max_segments")
        if self.min_segment_length < 1 or self.min_gap < 1:
            errs.append("min_segment_length and min_gap must be >= 1")
        if self.min_frames > self.max_frames:
            errs.append("min_frames exceeds max_frames")
        need = self.max_segments * self.min_segment_length + (self.max_segments - 1) * self.min_gap
        if self.min_frames < need:
            errs.append(f"min_frames={self.min_frames} cannot hold {self.max_segments} segments "
                        f"(needs {need} frames)")
        if self.max_dsep < 0:
            errs.append("max_dsep must be >= 0")
        if min(self.center_jitter, self.size_jitter, self.angle_jitter) < 0:
            errs.append("jitter knobs must be non-negative")
        if self.confidence not in ("uniform", "constant"):
            errs.append(f"unknown confidence model {self.confidence!r}")
        lo, hi = np.asarray(self.workspace[0]), np.asarray(self.workspace[1])
        if np.any(hi - lo <= 0):
            errs.append("workspace has a zero or negative extent")
        return errs

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["workspace"] = [list(self.workspace[0]), list(self.workspace[1])]
        d["size_range"] = list(self.size_range)
        d["grid_counts"] = list(self.grid_counts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "workspace" in d:
            d["workspace"] = (tuple(d["workspace"][0]), tuple(d["workspace"][1]))
        for key in ("size_range", "grid_counts"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValidationError([f"unknown config keys: {sorted(unknown)}"])
        return cls(**d)


@dataclass
class Trajectory:
    """Smooth box trajectory defined on every frame of a sequence."""

    base: np.ndarray
    amp: np.ndarray
    period: np.ndarray
    phase: np.ndarray
    size: np.ndarray
    yaw0: float
    yaw_rate: float
    tilt: np.ndarray
    tilt_period: float

    def box(self, t: int) -> Box9:
        center = self.base + self.amp * np.sin(2 * np.pi * t / self.period + self.phase)
        w = 2 * np.pi * t / self.tilt_period
        rot = (self.yaw0 + self.yaw_rate * t, self.tilt[0] * np.sin(w), self.tilt[1] * np.cos(w))
        return Box9(tuple(center), tuple(self.size), rot)


@dataclass
class GeneratedData:
    config: SynthConfig
    annotations: list[SequenceAnnotation]
    oracle: list[ResponseTrack]
    degraded: list[ResponseTrack]
    dsep: list[int]
    trajectories: list[Trajectory]
    heads: dict[str, HeadOutput] | None = None
    grid: AnchorGrid | None = None


def _layout_segments(rng, frame_count: int, cfg: SynthConfig):
    k = int(rng.integers(cfg.min_segments, cfg.max_segments + 1))
    need = k * cfg.min_segment_length + (k - 1) * cfg.min_gap
    dsep = int(rng.integers(0, min(cfg.max_dsep, frame_count - need) + 1))
    avail = frame_count - dsep
    extra = rng.multinomial(avail - need, np.full(2 * k, 1.0 / (2 * k)))
    lengths = cfg.min_segment_length + extra[:k]
    gaps = cfg.min_gap + extra[k:2 * k - 1]
    start = int(extra[-1])
    intervals = []
    for i in range(k):
        end = start + int(lengths[i]) - 1
        intervals.append(TemporalInterval(start, end))
        if i < k - 1:
            start = end + 1 + int(gaps[i])
    return intervals, dsep


def _trajectory(rng, cfg: SynthConfig) -> Trajectory:
    lo, hi = np.asarray(cfg.workspace[0], float), np.asarray(cfg.workspace[1], float)
    extent = hi - lo
    amp = rng.uniform(0.0, 0.2, 3) * extent
    margin = 0.05 * extent
    base = rng.uniform(lo + amp + margin, hi - amp - margin)
    return Trajectory(
        base=base,
        amp=amp,
        period=rng.uniform(60.0, 400.0, 3),
        phase=rng.uniform(0.0, 2 * np.pi, 3),
        size=rng.uniform(cfg.size_range[0], cfg.size_range[1], 3),
        yaw0=float(rng.uniform(-np.pi, np.pi)),
        yaw_rate=float(rng.uniform(-0.01, 0.01)),
        tilt=rng.uniform(-cfg.max_tilt, cfg.max_tilt, 2),
        tilt_period=float(rng.uniform(80.0, 300.0)),
    )


def _degrade(traj: Trajectory, gt: ResponseTrack, frame_count: int, noise, cfg: SynthConfig,
             confidence: float) -> ResponseTrack:
    zc, zs, za = noise
    start = min(max(gt.interval.start_frame + cfg.temporal_shift, 0), frame_count - 1)
    end = min(max(gt.interval.end_frame + cfg.temporal_shift, 0), frame_count - 1)
    boxes = {}
    for t in range(start, end + 1):
        b = traj.box(t)
        boxes[t] = Box9(
            tuple(np.asarray(b.center) + cfg.center_jitter * zc[t]),
            tuple(np.asarray(b.size) * np.exp(cfg.size_jitter * zs[t])),
            tuple(np.asarray(b.rotation) + cfg.angle_jitter * za[t]),
        )
    return ResponseTrack(gt.query_id, TemporalInterval(start, end), boxes, confidence)


def encode_head(grid: AnchorGrid, track: ResponseTrack, frame_count: int, margin: int = 5,
                on_logit: float = 10.0, off_logit: float = -10.0) -> HeadOutput:
    """Head tensors that decode exactly to ``track``.

    Covers frames ``start - margin .. end + margin`` (clipped to the
    sequence). On track frames the positive anchors (or the nearest one if
    none qualifies) carry the encoded box and a high presence logit.
    """
    first = max(0, track.interval.start_frame - margin)
    last = min(frame_count - 1, track.interval.end_frame + margin)
    head = HeadOutput.empty(last - first + 1, len(grid), off_logit, frame_offset=first)
    for t in track.interval.frames():
        box = track.boxes[t]
        idx = assign_positives(grid, box.center).indices
        if len(idx) == 0:
            d = np.linalg.norm(grid.centers - np.asarray(box.center), axis=1)
            idx = np.array([int(np.argmin(d))])
        row = t - first
        for n in idx:
            off, size, rot = encode(grid, box, int(n))
            head.center_offset[row, n] = off
            head.size[row, n] = size
            head.rotation[row, n] = rot
            head.presence_logit[row, n] = on_logit
    return head


def generate_synthetic(seed: int, config: SynthConfig = SynthConfig()) -> GeneratedData:
    """Deterministic synthetic annotations with oracle and degraded predictions.

    Each sequence draws from its own generator seeded by
    :func:`sequence_seed`; stream 0 shapes the sequence, stream 1 the
    confidences and stream 2 the noise, so changing a noise knob never
    changes the ground truth or the ranking.
    """
    problems = config.problems()
    if problems:
        raise ValidationError(problems)
    grid = None
    if config.emit_head:
        grid = build_grid(config.workspace, *config.grid_counts)
    anns, oracle, degraded, dseps, trajs = [], [], [], [], []
    heads = {} if config.emit_head else None
    for i in range(config.num_sequences):
        rng = np.random.default_rng(sequence_seed(seed, i, 0))
        conf_rng = np.random.default_rng(sequence_seed(seed, i, 1))
        noise_rng = np.random.default_rng(sequence_seed(seed, i, 2))
        sid = f"seq{i:04d}"
        n_frames = int(rng.integers(config.min_frames, config.max_frames + 1))
        intervals, dsep = _layout_segments(rng, n_frames, config)
        traj = _trajectory(rng, config)
        segments = tuple(Segment(iv, tuple(traj.box(t) for t in iv.frames())) for iv in intervals)
        query_box = traj.box(int(rng.integers(0, n_frames)))
        ann = SequenceAnnotation(sid, n_frames, QueryDef(query_box, f"template:{sid}"), segments,
                                 segments[-1].end, config.fps)
        gt = ann.response_track()
        conf = 1.0 if config.confidence == "constant" else float(conf_rng.uniform(0.5, 1.0))
        noise = (noise_rng.standard_normal((n_frames, 3)),
                 noise_rng.standard_normal((n_frames, 3)),
                 noise_rng.standard_normal((n_frames, 3)))
        anns.append(ann)
        oracle.append(ResponseTrack(sid, gt.interval, dict(gt.boxes), conf))
        degraded.append(_degrade(traj, gt, n_frames, noise, config, conf))
        dseps.append(dsep)
        trajs.append(traj)
        if heads is not None:
            heads[sid] = encode_head(grid, gt, n_frames, config.head_margin)
    return GeneratedData(config, anns, oracle, degraded, dseps, trajs, heads, grid)
