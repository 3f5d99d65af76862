"""Anchor lattice, per-frame box decoding, positive assignment and the training loss.

The head predicts, for every frame ``t`` and anchor ``n``, a center offset,
a size, a rotation and a presence logit. Decoding picks the anchor with the
highest presence and adds its offset to the anchor center.

Loss terms (all pooled over the positive (frame, anchor) pairs of a clip):

* ``L_c``, ``L_s``, ``L_r`` -- mean absolute error of offsets, sizes and
  wrapped rotation differences (smooth-L1 selectable),
* ``L_cls`` -- focal loss on presence, averaged over every frame and anchor,
* ``L_dist`` -- mean Euclidean distance between ``anchor + offset`` and the
  ground-truth center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geom3d import Box9, wrap_angles
from .metrics import ResponseTrack, TemporalInterval

DEFAULT_WORKSPACE = ((0.0, -2.0, -1.0), (10.0, 2.0, 1.0))
DEFAULT_COUNTS = (16, 16, 16)
POSITIVE_RADIUS = 0.3
POSITIVE_TOPK = 5
FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
PROB_EPS = 1e-7


@dataclass(frozen=True)
class AnchorGrid:
    """Anchor centers at the cell midpoints of a uniform subdivision.

    Anchor index ``n = (ix * ny + iy) * nz + iz``: x varies slowest, z fastest.
    """

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    counts: tuple[int, int, int]
    centers: np.ndarray = field(repr=False, compare=False)

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.counts)

    def __len__(self) -> int:
        return int(np.prod(self.counts))

    def index(self, ix: int, iy: int, iz: int) -> int:
        _, ny, nz = self.counts
        return (ix * ny + iy) * nz + iz


def build_grid(workspace=DEFAULT_WORKSPACE, nx: int = 16, ny: int = 16, nz: int = 16) -> AnchorGrid:
    lo = tuple(float(v) for v in workspace[0])
    hi = tuple(float(v) for v in workspace[1])
    counts = (int(nx), int(ny), int(nz))
    if min(counts) < 1:
        raise ValueError(f"anchor counts must be positive, got {counts}")
    if any(h <= l for l, h in zip(lo, hi)):
        raise ValueError(f"workspace has a zero or negative extent: {lo} .. {hi}")
    axes = [
        lo[k] + (np.arange(counts[k]) + 0.5) * ((hi[k] - lo[k]) / counts[k]) for k in range(3)
    ]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)
    centers.setflags(write=False)
    return AnchorGrid(lo, hi, counts, centers)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class HeadOutput:
    """Raw head tensors for a clip of ``T`` frames over ``N`` anchors.

    ``center_offset``, ``size`` and ``rotation`` are (T, N, 3); the presence
    logits are (T, N). Presence probabilities are their logistic. Row ``i``
    belongs to sequence frame ``frame_offset + i``.
    """

    center_offset: np.ndarray
    size: np.ndarray
    rotation: np.ndarray
    presence_logit: np.ndarray
    frame_offset: int = 0

    def __post_init__(self):
        self.frame_offset = int(self.frame_offset)
        t, n = np.shape(self.presence_logit)
        for name in ("center_offset", "size", "rotation"):
            if np.shape(getattr(self, name)) != (t, n, 3):
                raise ValueError(f"{name} must have shape {(t, n, 3)}")

    @classmethod
    def empty(cls, frames: int, anchors: int, logit: float = -10.0,
              frame_offset: int = 0) -> "HeadOutput":
        return cls(
            np.zeros((frames, anchors, 3)),
            np.ones((frames, anchors, 3)),
            np.zeros((frames, anchors, 3)),
            np.full((frames, anchors), float(logit)),
            frame_offset,
        )

    @property
    def num_frames(self) -> int:
        return self.presence_logit.shape[0]

    @property
    def presence(self) -> np.ndarray:
        return sigmoid(self.presence_logit)

    def copy(self) -> "HeadOutput":
        return HeadOutput(self.center_offset.copy(), self.size.copy(),
                          self.rotation.copy(), self.presence_logit.copy(), self.frame_offset)


def encode(grid: AnchorGrid, gt: Box9, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Regression target of ``gt`` relative to anchor ``n`` (no clamping)."""
    offset = np.asarray(gt.center) - grid.centers[n]
    return offset, np.asarray(gt.size, dtype=float), np.asarray(gt.rotation, dtype=float)


def decode(grid: AnchorGrid, head: HeadOutput, t: int) -> tuple[Box9, float]:
    """Top-1 box at frame ``t`` and its presence score.

    The argmax runs over logits (strictly monotone in presence), first
    index wins ties.
    """
    n = int(np.argmax(head.presence_logit[t]))
    center = grid.centers[n] + head.center_offset[t, n]
    box = Box9(tuple(center), tuple(head.size[t, n]), tuple(head.rotation[t, n]))
    return box, float(sigmoid(head.presence_logit[t, n]))


@dataclass(frozen=True)
class AssignmentResult:
    indices: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


def assign_positives(grid: AnchorGrid, gt_center, radius: float = POSITIVE_RADIUS,
                     k: int = POSITIVE_TOPK) -> AssignmentResult:
    """Anchors within ``radius`` of ``gt_center`` that are also among its ``k`` nearest.

    Distance ties are broken by anchor index. The result may be empty.
    """
    d = np.linalg.norm(grid.centers - np.asarray(gt_center, dtype=float), axis=1)
    order = np.lexsort((np.arange(len(d)), d))[:k]
    keep = order[d[order] <= radius]
    return AssignmentResult(keep, d[keep])


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------


def focal_loss(p, target, gamma: float = FOCAL_GAMMA, alpha: float = FOCAL_ALPHA,
               eps: float = PROB_EPS) -> np.ndarray:
    """Element-wise binary focal loss on probabilities.

    ``p`` is clamped to ``[eps, 1 - eps]``; the loss is exactly zero where
    ``p`` equals the target before clamping.
    """
    p = np.asarray(p, dtype=float)
    target = np.asarray(target, dtype=float)
    pc = np.clip(p, eps, 1.0 - eps)
    pt = np.where(target > 0.5, pc, 1.0 - pc)
    at = np.where(target > 0.5, alpha, 1.0 - alpha)
    loss = -at * (1.0 - pt) ** gamma * np.log(pt)
    return np.where(p == target, 0.0, loss)


def focal_loss_grad(p, target, gamma: float = FOCAL_GAMMA, alpha: float = FOCAL_ALPHA,
                    eps: float = PROB_EPS) -> np.ndarray:
    """d focal_loss / d p (evaluated at the clamped probability)."""
    p = np.asarray(p, dtype=float)
    target = np.asarray(target, dtype=float)
    pc = np.clip(p, eps, 1.0 - eps)
    pos = target > 0.5
    pt = np.where(pos, pc, 1.0 - pc)
    at = np.where(pos, alpha, 1.0 - alpha)
    q = 1.0 - pt
    if gamma == 0.0:
        dl_dpt = -at / pt
    else:
        dl_dpt = at * (gamma * q ** (gamma - 1.0) * np.log(pt) - q ** gamma / pt)
    grad = np.where(pos, dl_dpt, -dl_dpt)
    return np.where(p == target, 0.0, grad)


def _regression(diff: np.ndarray, kind: str, beta: float):
    if kind == "l1":
        return np.abs(diff), np.sign(diff)
    if kind == "smooth_l1":
        a = np.abs(diff)
        small = a < beta
        val = np.where(small, 0.5 * diff ** 2 / beta, a - 0.5 * beta)
        grad = np.where(small, diff / beta, np.sign(diff))
        return val, grad
    raise ValueError(f"unknown regression loss {kind!r}")


@dataclass(frozen=True)
class LossWeights:
    center: float = 1.0
    size: float = 1.0
    rotation: float = 0.1
    cls: float = 100.0
    dist: float = 0.3

    def as_dict(self) -> dict[str, float]:
        return {"c": self.center, "s": self.size, "r": self.rotation,
                "cls": self.cls, "dist": self.dist}


@dataclass
class LossResult:
    total: float
    components: dict[str, float]
    positives: list[tuple[int, np.ndarray]]
    grads: dict[str, np.ndarray] | None = None


def clip_assignments(grid: AnchorGrid, gt_boxes: Sequence[Box9 | None]):
    """Per-frame positives; frames without a box get an empty set."""
    out = []
    for t, b in enumerate(gt_boxes):
        if b is None:
            out.append((t, np.zeros(0, dtype=int)))
        else:
            out.append((t, assign_positives(grid, b.center).indices))
    return out


def loss(head: HeadOutput, gt_boxes: Sequence[Box9 | None], grid: AnchorGrid,
         weights: LossWeights = LossWeights(), regression: str = "l1",
         beta: float = 0.1, gamma: float = FOCAL_GAMMA, alpha: float = FOCAL_ALPHA,
         with_grad: bool = False, assignments=None) -> LossResult:
    """Weighted training loss of one clip.

    ``gt_boxes[t]`` is the ground-truth box at frame ``t`` or ``None`` when
    the object is absent. Gradients (when requested) are with respect to
    ``center_offset``, ``size``, ``rotation`` and ``presence_logit``.
    """
    T, N = head.presence_logit.shape
    if len(gt_boxes) != T:
        raise ValueError(f"{len(gt_boxes)} ground-truth entries for {T} frames")
    if assignments is None:
        assignments = clip_assignments(grid, gt_boxes)

    tt = np.concatenate([np.full(len(idx), t, dtype=int) for t, idx in assignments])
    nn = np.concatenate([idx for _, idx in assignments]).astype(int)
    P = len(nn)

    targets = np.zeros((T, N))
    targets[tt, nn] = 1.0
    p = head.presence
    cls_el = focal_loss(p, targets, gamma, alpha)
    l_cls = float(np.sum(cls_el) / (T * N))

    g_off = np.zeros_like(head.center_offset)
    g_size = np.zeros_like(head.size)
    g_rot = np.zeros_like(head.rotation)

    if P:
        gt_c = np.array([gt_boxes[t].center for t in tt])
        gt_s = np.array([gt_boxes[t].size for t in tt])
        gt_r = np.array([gt_boxes[t].rotation for t in tt])
        anchors = grid.centers[nn]
        off = head.center_offset[tt, nn]

        v_c, d_c = _regression(off - (gt_c - anchors), regression, beta)
        v_s, d_s = _regression(head.size[tt, nn] - gt_s, regression, beta)
        v_r, d_r = _regression(wrap_angles(head.rotation[tt, nn] - gt_r), regression, beta)
        l_c = float(np.sum(v_c) / (3 * P))
        l_s = float(np.sum(v_s) / (3 * P))
        l_r = float(np.sum(v_r) / (3 * P))

        # (anchor + offset) - gt, arranged so a perfect encoding gives exactly 0
        vec = off - (gt_c - anchors)
        dist = np.linalg.norm(vec, axis=1)
        l_dist = float(np.sum(dist) / P)

        if with_grad:
            safe = np.where(dist > 0.0, dist, 1.0)[:, None]
            unit = np.where(dist[:, None] > 0.0, vec / safe, 0.0)
            np.add.at(g_off, (tt, nn), weights.center * d_c / (3 * P) + weights.dist * unit / P)
            np.add.at(g_size, (tt, nn), weights.size * d_s / (3 * P))
            np.add.at(g_rot, (tt, nn), weights.rotation * d_r / (3 * P))
    else:
        l_c = l_s = l_r = l_dist = 0.0

    comps = {"c": l_c, "s": l_s, "r": l_r, "cls": l_cls, "dist": l_dist}
    w = weights.as_dict()
    total = math.fsum(w[k] * comps[k] for k in comps)

    grads = None
    if with_grad:
        g_logit = weights.cls * focal_loss_grad(p, targets, gamma, alpha) * p * (1.0 - p) / (T * N)
        grads = {"center_offset": g_off, "size": g_size, "rotation": g_rot,
                 "presence_logit": g_logit}
    return LossResult(total, comps, assignments, grads)


# --------------------------------------------------------------------------
# finite-difference verification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheck:
    max_rel_error: float
    at_kink: bool
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)


def gradient_check(fn: Callable[[np.ndarray], tuple[float, np.ndarray]], x, eps: float = 1e-5,
                   rel_floor: float = 1e-8,
                   kink: Callable[[np.ndarray], bool] | None = None) -> GradCheck:
    """Compare ``fn``'s analytic gradient with central differences.

    ``fn(x)`` returns ``(value, grad)``. The relative error per coordinate is
    ``|a - n| / max(|a|, |n|, rel_floor)``. When ``kink(x)`` reports that the
    point sits within ``eps`` of a non-differentiable set the result is
    flagged instead of trusted.
    """
    x = np.array(x, dtype=float)
    _, analytic = fn(x.copy())
    analytic = np.asarray(analytic, dtype=float).reshape(x.shape)
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn(x.copy())[0]
        flat[i] = orig - eps
        fm = fn(x.copy())[0]
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), rel_floor)
    rel = np.abs(analytic - numeric) / denom
    at_kink = bool(kink(x)) if kink is not None else False
    return GradCheck(float(rel.max()) if rel.size else 0.0, at_kink, analytic, numeric)


def component_fn(head: HeadOutput, gt_boxes, grid: AnchorGrid, component: str, param: str,
                 **loss_kwargs):
    """Closure ``x -> (component value, gradient w.r.t. head.<param>)``.

    Only the selected component carries weight, so the returned gradient is
    that component's own gradient.
    """
    names = {"c": "center", "s": "size", "r": "rotation", "cls": "cls", "dist": "dist"}
    w = LossWeights(**{v: (1.0 if k == component else 0.0) for k, v in names.items()})
    assignments = clip_assignments(grid, gt_boxes)

    def fn(x):
        h = head.copy()
        setattr(h, param, np.asarray(x, dtype=float).reshape(getattr(head, param).shape))
        res = loss(h, gt_boxes, grid, w, with_grad=True, assignments=assignments, **loss_kwargs)
        return res.components[component], res.grads[param]

    return fn


# --------------------------------------------------------------------------
# track assembly and head archives
# --------------------------------------------------------------------------


def decode_track(grid: AnchorGrid, head: HeadOutput, query_id: str, threshold: float = 0.5,
                 rule: str = "longest", confidence: str = "mean") -> ResponseTrack | None:
    """Assemble a response track from per-frame Top-1 decodes.

    Frames whose Top-1 presence exceeds ``threshold`` form runs; the
    ``longest`` run (latest wins ties) or the ``latest`` run becomes the
    track. Confidence is the ``mean`` or ``max`` presence over the run.
    """
    T = head.num_frames
    if T == 0:
        return None
    best = np.argmax(head.presence_logit, axis=1)
    scores = sigmoid(head.presence_logit[np.arange(T), best])
    on = scores > threshold
    runs = []
    t = 0
    while t < T:
        if on[t]:
            s = t
            while t + 1 < T and on[t + 1]:
                t += 1
            runs.append((s, t))
        t += 1
    if not runs:
        return None
    if rule == "longest":
        start, end = max(runs, key=lambda r: (r[1] - r[0], r[0]))
    elif rule == "latest":
        start, end = runs[-1]
    else:
        raise ValueError(f"unknown track rule {rule!r}")
    off = head.frame_offset
    boxes = {}
    for f in range(start, end + 1):
        boxes[off + f], _ = decode(grid, head, f)
    run_scores = scores[start:end + 1]
    if confidence == "mean":
        conf = float(math.fsum(run_scores) / len(run_scores))
    elif confidence == "max":
        conf = float(run_scores.max())
    else:
        raise ValueError(f"unknown confidence rule {confidence!r}")
    return ResponseTrack(query_id, TemporalInterval(off + start, off + end), boxes, conf)


def save_head_outputs(path, heads: dict[str, HeadOutput], grid: AnchorGrid) -> None:
    """Write a compressed archive: ``<seq>/<tensor>`` arrays plus the grid."""
    arrays = {"__grid__": np.array(list(grid.lo) + list(grid.hi) + list(grid.counts), dtype=float)}
    for seq_id, h in heads.items():
        for name in ("center_offset", "size", "rotation", "presence_logit"):
            arrays[f"{seq_id}/{name}"] = getattr(h, name)
        arrays[f"{seq_id}/frame_offset"] = np.array(h.frame_offset)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_head_outputs(path) -> tuple[dict[str, HeadOutput], AnchorGrid | None]:
    with np.load(path) as data:
        grid = None
        if "__grid__" in data.files:
            g = data["__grid__"]
            grid = build_grid((tuple(g[0:3]), tuple(g[3:6])), *(int(v) for v in g[6:9]))
        parts: dict[str, dict[str, np.ndarray]] = {}
        for key in data.files:
            if key == "__grid__":
                continue
            seq_id, _, name = key.rpartition("/")
            if not seq_id:
                raise ValueError(f"malformed head archive key {key!r}")
            val = data[key]
            parts.setdefault(seq_id, {})[name] = int(val) if name == "frame_offset" else val
    heads = {}
    for seq_id in sorted(parts):
        try:
            heads[seq_id] = HeadOutput(**parts[seq_id])
        except TypeError as exc:
            raise ValueError(f"head archive entry {seq_id!r} is incomplete") from exc
    return heads, grid
