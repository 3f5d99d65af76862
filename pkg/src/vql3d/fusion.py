"""Forward reference implementations of the RGB / point-cloud fusion operators.

Conventions
-----------
* Camera frame: x right, y down, z forward; ``depth`` is the camera z.
  A :class:`PinholeCamera` maps world points with ``x_cam = R @ x + t``.
* A feature map of ``H x W`` tokens covers an image of ``width x height``
  pixels; token ``(i, j)`` is centered at pixel
  ``((j + 0.5) * width / W, (i + 0.5) * height / H)``.
* A :class:`FeatureVolume3D` spans the axis-aligned bounds ``lo .. hi``
  with voxel ``(d, h, w)`` centered in the cell midpoint; ``d`` indexes
  world x (the depth axis), ``h`` world y and ``w`` world z.

Nothing here is trained. Projections are identity or seeded-random, and
the tests check the algebra of each operator.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geom3d import Box9, box_corners


# --------------------------------------------------------------------------
# cameras and feature containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PinholeCamera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3) or not np.allclose(r @ r.T, np.eye(3), atol=1e-9) \
                or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("camera rotation must be a proper rotation matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @classmethod
    def looking_along_x(cls, eye, fx: float, fy: float, width: int, height: int) -> "PinholeCamera":
        """Camera at ``eye`` whose optical axis is world +x (z up in the image as -v)."""
        r = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
        t = -r @ np.asarray(eye, dtype=float)
        return cls(fx, fy, width / 2.0, height / 2.0, width, height, r, t)

    @property
    def position(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


class Projection(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray

    @property
    def in_front(self) -> np.ndarray:
        return self.depth > 0


def project_points(camera: PinholeCamera, points) -> Projection:
    """Project world points of shape (..., 3) to pixels and camera depth.

    Points with non-positive depth still get (possibly infinite) pixel
    coordinates; check :attr:`Projection.in_front`.
    """
    p = np.asarray(points, dtype=float)
    cam = p @ camera.rotation.T + camera.translation
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.cx + camera.fx * cam[..., 0] / z
        v = camera.cy + camera.fy * cam[..., 1] / z
    return Projection(u, v, z)


def project_point(camera: PinholeCamera, p) -> tuple[float, float, float]:
    pr = project_points(camera, np.asarray(p, dtype=float)[None])
    return float(pr.u[0]), float(pr.v[0]), float(pr.depth[0])


@dataclass
class FeatureMap2D:
    values: np.ndarray  # (H, W, C)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValueError("feature map must be H x W x C with every extent >= 1")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature map contains non-finite values")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class FeatureVolume3D:
    values: np.ndarray  # (D, H, W, C)
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 4 or min(self.values.shape) < 1:
            raise ValueError("feature volume must be D x H x W x C")
        self.lo = tuple(float(v) for v in self.lo)
        self.hi = tuple(float(v) for v in self.hi)

    @property
    def grid_shape(self) -> tuple[int, int, int]:
        return self.values.shape[:3]

    @property
    def spacing(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.grid_shape)

    @property
    def voxel_centers(self) -> np.ndarray:
        axes = [
            self.lo[k] + (np.arange(self.grid_shape[k]) + 0.5) * self.spacing[k] for k in range(3)
        ]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def with_values(self, values) -> "FeatureVolume3D":
        return FeatureVolume3D(values, self.lo, self.hi)


def token_pixel_centers(h: int, w: int, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    return (jj + 0.5) * (width / w), (ii + 0.5) * (height / h)


def frustum_mask(camera: PinholeCamera, volume: FeatureVolume3D) -> np.ndarray:
    """Voxels whose center projects inside the image with positive depth."""
    pr = project_points(camera, volume.voxel_centers)
    with np.errstate(invalid="ignore"):
        return (pr.depth > 0) & (pr.u >= 0) & (pr.u < camera.width) \
            & (pr.v >= 0) & (pr.v < camera.height)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def bilinear_sample(values: np.ndarray, u, v, width: int, height: int) -> np.ndarray:
    """Sample an (H, W, C) token map at pixel coordinates, clamped at the border."""
    h, w, _ = values.shape
    x = np.clip(np.asarray(u, dtype=float) * (w / width) - 0.5, 0.0, w - 1.0)
    y = np.clip(np.asarray(v, dtype=float) * (h / height) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x).astype(int)
    y0 = np.floor(y).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = values[y0, x0] * (1.0 - fx) + values[y0, x1] * fx
    bottom = values[y1, x0] * (1.0 - fx) + values[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def trilinear_sample(volume: FeatureVolume3D, points) -> tuple[np.ndarray, np.ndarray]:
    """Sample the volume at world points of shape (..., 3).

    Points inside the volume bounds are clamped to the outer voxel centers;
    points outside the bounds return zeros. Returns ``(features, inside)``.
    """
    p = np.asarray(points, dtype=float)
    lo, hi = np.asarray(volume.lo), np.asarray(volume.hi)
    inside = np.all((p >= lo) & (p <= hi), axis=-1)
    dims = np.asarray(volume.grid_shape)
    idx = np.clip((p - lo) / volume.spacing - 0.5, 0.0, dims - 1.0)
    i0 = np.floor(idx).astype(int)
    i1 = np.minimum(i0 + 1, dims - 1)
    f = idx - i0
    vals = volume.values
    out = 0.0
    for bx in (0, 1):
        ix = i1[..., 0] if bx else i0[..., 0]
        wx = f[..., 0] if bx else 1.0 - f[..., 0]
        for by in (0, 1):
            iy = i1[..., 1] if by else i0[..., 1]
            wy = f[..., 1] if by else 1.0 - f[..., 1]
            for bz in (0, 1):
                iz = i1[..., 2] if bz else i0[..., 2]
                wz = f[..., 2] if bz else 1.0 - f[..., 2]
                out = out + (wx * wy * wz)[..., None] * vals[ix, iy, iz]
    return np.where(inside[..., None], out, 0.0), inside


# --------------------------------------------------------------------------
# lifting
# --------------------------------------------------------------------------


@dataclass
class Lifted:
    features: np.ndarray   # (H, W, S, C)
    positions: np.ndarray  # (H, W, S, 3) world coordinates
    depths: np.ndarray     # (S,) camera depth of each sample
    pixels: tuple[np.ndarray, np.ndarray]  # token centers (u, v), each (H, W)


def lift(features: FeatureMap2D, camera: PinholeCamera, depth_samples: int,
         depth_range: tuple[float, float]) -> Lifted:
    """Replicate each token at ``depth_samples`` points along its viewing ray."""
    if depth_samples < 1:
        raise ValueError("depth_samples must be >= 1")
    h, w, c = features.shape
    u, v = token_pixel_centers(h, w, camera.width, camera.height)
    depths = np.linspace(depth_range[0], depth_range[1], depth_samples)
    rays = np.stack([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, np.ones_like(u)], -1)
    cam_pts = rays[:, :, None, :] * depths[None, None, :, None]
    world = (cam_pts - camera.translation) @ camera.rotation
    lifted = np.broadcast_to(features.values[:, :, None, :], (h, w, depth_samples, c)).copy()
    return Lifted(lifted, world, depths, (u, v))


def splat_lifted(lifted: Lifted, volume: FeatureVolume3D) -> np.ndarray:
    """Average lifted samples into the voxels that contain them (zeros elsewhere)."""
    dims = np.asarray(volume.grid_shape)
    c = lifted.features.shape[-1]
    pos = lifted.positions.reshape(-1, 3)
    feat = lifted.features.reshape(-1, c)
    rel = (pos - np.asarray(volume.lo)) / volume.spacing
    idx = np.floor(rel).astype(int)
    ok = np.all((idx >= 0) & (idx < dims), axis=1)
    idx, feat = idx[ok], feat[ok]
    acc = np.zeros(tuple(dims) + (c,))
    cnt = np.zeros(tuple(dims))
    np.add.at(acc, (idx[:, 0], idx[:, 1], idx[:, 2]), feat)
    np.add.at(cnt, (idx[:, 0], idx[:, 1], idx[:, 2]), 1.0)
    return np.where(cnt[..., None] > 0, acc / np.maximum(cnt, 1.0)[..., None], 0.0)


# --------------------------------------------------------------------------
# attention
# --------------------------------------------------------------------------


@dataclass
class AttentionParams:
    """Per-head projections ``wq (h, dq, dk)``, ``wk (h, dkv, dk)``,
    ``wv (h, dkv, dv)`` and the output projection ``wo (h * dv, dout)``."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    def __post_init__(self):
        h = self.wq.shape[0]
        if self.wk.shape[0] != h or self.wv.shape[0] != h:
            raise ValueError("projection head counts differ")
        if self.wq.shape[2] != self.wk.shape[2]:
            raise ValueError("query and key head widths differ")
        if self.wk.shape[1] != self.wv.shape[1]:
            raise ValueError("key and value input widths differ")
        if self.wo.shape[0] != h * self.wv.shape[2]:
            raise ValueError("output projection does not match concatenated heads")

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "AttentionParams":
        eye = np.eye(dim)[None]
        return cls(eye.copy(), eye.copy(), eye.copy(), np.eye(dim))

    @classmethod
    def random(cls, dim: int, heads: int, seed=0) -> "AttentionParams":
        if dim % heads:
            raise ValueError(f"head count {heads} does not divide model width {dim}")
        rng = np.random.default_rng(seed)
        dh = dim // heads
        scale = 1.0 / math.sqrt(dim)
        return cls(
            rng.normal(0.0, scale, (heads, dim, dh)),
            rng.normal(0.0, scale, (heads, dim, dh)),
            rng.normal(0.0, scale, (heads, dim, dh)),
            rng.normal(0.0, scale, (heads * dh, dim)),
        )


@dataclass
class AttentionOutput:
    output: np.ndarray       # (Nq, dout)
    weights: np.ndarray      # (heads, Nq, Nk)
    empty_rows: np.ndarray   # (Nq,) rows with no unmasked key


def mha(queries, keys, values, mask, params: AttentionParams) -> AttentionOutput:
    """Multi-head scaled dot-product attention.

    ``mask`` is a boolean (Nq, Nk) array, True where attention is allowed,
    or None. Masked entries get exactly zero weight; rows without any
    allowed key output zeros and are reported in ``empty_rows``.
    """
    q = np.asarray(queries, dtype=float)
    k = np.asarray(keys, dtype=float)
    v = np.asarray(values, dtype=float)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("queries, keys and values must be 2-D")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"{k.shape[0]} keys but {v.shape[0]} values")
    if q.shape[1] != params.wq.shape[1] or k.shape[1] != params.wk.shape[1] \
            or v.shape[1] != params.wv.shape[1]:
        raise ValueError("input widths do not match the attention projections")
    nq, nk = q.shape[0], k.shape[0]
    if mask is None:
        mask = np.ones((nq, nk), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (nq, nk):
        raise ValueError(f"mask shape {mask.shape} != {(nq, nk)}")

    qh = np.einsum("nd,hde->hne", q, params.wq)
    kh = np.einsum("nd,hde->hne", k, params.wk)
    vh = np.einsum("nd,hde->hne", v, params.wv)
    logits = np.einsum("hqe,hke->hqk", qh, kh) / math.sqrt(params.wq.shape[2])
    logits = np.where(mask[None], logits, -np.inf)
    empty = ~mask.any(axis=1)
    row_max = np.max(np.where(mask[None], logits, -np.inf), axis=2, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    ex = np.where(mask[None], np.exp(logits - row_max), 0.0)
    denom = ex.sum(axis=2, keepdims=True)
    weights = np.where(denom > 0, ex / np.where(denom > 0, denom, 1.0), 0.0)
    heads_out = np.einsum("hqk,hke->hqe", weights, vh)
    concat = np.transpose(heads_out, (1, 0, 2)).reshape(nq, -1)
    out = concat @ params.wo
    out[empty] = 0.0
    return AttentionOutput(out, weights, empty)


@dataclass
class FeedForward:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def random(cls, dim: int, hidden: int | None = None, seed=0) -> "FeedForward":
        rng = np.random.default_rng(seed)
        hidden = hidden or 2 * dim
        return cls(rng.normal(0, 1 / math.sqrt(dim), (dim, hidden)), np.zeros(hidden),
                   rng.normal(0, 1 / math.sqrt(hidden), (hidden, dim)), np.zeros(dim))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x + np.maximum(x @ self.w1 + self.b1, 0.0) @ self.w2 + self.b2


# --------------------------------------------------------------------------
# fusion variants
# --------------------------------------------------------------------------


@dataclass
class FusionResult:
    volume: FeatureVolume3D
    weights: list[np.ndarray]          # one (heads, Nq, Nk) dump per attention call
    mask: np.ndarray | None = None     # voxels that were eligible for fusion
    skipped: list[int] = field(default_factory=list)  # slices / columns left untouched


def _run(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _post(x_in, attn_out, residual: bool, ffn: FeedForward | None):
    y = attn_out + x_in if residual else attn_out
    return ffn(y) if ffn is not None else y


def slice_depth_intervals(camera: PinholeCamera, volume: FeatureVolume3D) -> np.ndarray:
    """Camera-depth interval ``[lo, hi)`` owned by each depth slice, shape (D, 2).

    Slice depth is the mean camera depth of the slice's voxel centers;
    interval edges sit halfway between neighbouring slice depths.
    """
    depth = project_points(camera, volume.voxel_centers).depth
    d = depth.reshape(depth.shape[0], -1).mean(axis=1)
    order = np.argsort(d, kind="stable")
    ds = d[order]
    if len(ds) == 1:
        half = 0.5 * volume.spacing[0]
        edges = np.array([ds[0] - half, ds[0] + half])
    else:
        mids = 0.5 * (ds[1:] + ds[:-1])
        edges = np.concatenate([[ds[0] - (mids[0] - ds[0])], mids, [ds[-1] + (ds[-1] - mids[-1])]])
    out = np.empty((len(d), 2))
    out[order, 0] = edges[:-1]
    out[order, 1] = edges[1:]
    return out


def daf_fuse(volume: FeatureVolume3D, lifted: Lifted, camera: PinholeCamera,
             params: AttentionParams, residual: bool = False, ffn: FeedForward | None = None,
             workers: int = 1) -> FusionResult:
    """Depth attention fusion.

    Per depth slice, the in-frustum voxel features (queries) attend over the
    lifted 2D samples whose camera depth falls in that slice's interval
    (keys and values). Voxels outside the frustum, and slices without
    lifted samples, pass through unchanged.
    """
    mask = frustum_mask(camera, volume)
    intervals = slice_depth_intervals(camera, volume)
    c = lifted.features.shape[-1]
    feats = lifted.features.reshape(-1, lifted.features.shape[2], c)  # (H*W, S, C)

    def one(k):
        sel = mask[k]
        if not sel.any():
            return k, None, None
        in_slice = (lifted.depths >= intervals[k, 0]) & (lifted.depths < intervals[k, 1])
        keys = feats[:, in_slice, :].reshape(-1, c)
        if keys.shape[0] == 0:
            return k, None, None
        q = volume.values[k][sel]
        att = mha(q, keys, keys, None, params)
        return k, _post(q, att.output, residual, ffn), att.weights

    out = volume.values.copy()
    weights, skipped = [], []
    for k, new, w in _run(one, list(range(volume.grid_shape[0])), workers):
        if new is None:
            skipped.append(k)
            continue
        out[k][mask[k]] = new
        weights.append(w)
    return FusionResult(volume.with_values(out), weights, mask, skipped)


def sinusoidal_depth_encoding(depth: int, channels: int) -> np.ndarray:
    """Standard sine/cosine table, one ``channels``-vector per depth index."""
    pos = np.arange(depth)[:, None]
    i = np.arange(channels)[None, :]
    rates = 1.0 / np.power(10000.0, (2 * (i // 2)) / channels)
    ang = pos * rates
    return np.where(i % 2 == 0, np.sin(ang), np.cos(ang))


def gaf_fuse(volume: FeatureVolume3D, features2d: FeatureMap2D, depth_encoding,
             params: AttentionParams, residual: bool = False, workers: int = 1) -> FusionResult:
    """Guided attention fusion: depth-encoded voxel queries over all 2D tokens, per slice."""
    enc = np.asarray(depth_encoding, dtype=float)
    d = volume.grid_shape[0]
    c = volume.values.shape[-1]
    if enc.shape != (d, c):
        raise ValueError(f"depth encoding shape {enc.shape} != {(d, c)}")
    tokens = features2d.values.reshape(-1, features2d.shape[-1])

    def one(k):
        x = volume.values[k].reshape(-1, c)
        att = mha(x + enc[k], tokens, tokens, None, params)
        return k, _post(x, att.output, residual, None), att.weights

    out = np.empty_like(volume.values)
    weights = []
    for k, new, w in _run(one, list(range(d)), workers):
        out[k] = new.reshape(volume.values.shape[1:3] + (-1,))
        weights.append(w)
    return FusionResult(volume.with_values(out), weights, None, [])


def paf_fuse(volume: FeatureVolume3D, features2d: FeatureMap2D, camera: PinholeCamera,
             params: AttentionParams, residual: bool = False, workers: int = 1) -> FusionResult:
    """Projection-aware fusion.

    In-frustum voxel centers are projected and the 2D map is sampled
    bilinearly there. Along each depth column the voxel features (queries)
    attend over the sampled features of that column (keys and values).
    """
    mask = frustum_mask(camera, volume)
    pr = project_points(camera, volume.voxel_centers)
    u = np.where(mask, pr.u, 0.0)
    v = np.where(mask, pr.v, 0.0)
    sampled = bilinear_sample(features2d.values, u, v, camera.width, camera.height)
    _, nh, nw = volume.grid_shape
    cols = [(h, w) for h in range(nh) for w in range(nw)]

    def one(hw):
        h, w = hw
        sel = mask[:, h, w]
        if not sel.any():
            return hw, None, None
        q = volume.values[:, h, w][sel]
        kv = sampled[:, h, w][sel]
        att = mha(q, kv, kv, None, params)
        return hw, _post(q, att.output, residual, None), att.weights

    out = volume.values.copy()
    weights, skipped = [], []
    for (h, w), new, wts in _run(one, cols, workers):
        if new is None:
            skipped.append(h * nw + w)
            continue
        col = out[:, h, w]
        col[mask[:, h, w]] = new
        out[:, h, w] = col
        weights.append(wts)
    return FusionResult(volume.with_values(out), weights, mask, skipped)


def add_fuse(volume: FeatureVolume3D, aligned2d) -> FeatureVolume3D:
    """Element-wise addition of an aligned 2D feature volume."""
    other = aligned2d.values if isinstance(aligned2d, FeatureVolume3D) else np.asarray(aligned2d)
    if other.shape != volume.values.shape:
        raise ValueError(f"shape mismatch: {other.shape} vs {volume.values.shape}")
    return volume.with_values(volume.values + other)


# --------------------------------------------------------------------------
# query conditioning and transformers
# --------------------------------------------------------------------------


@dataclass
class RoiFeature:
    features: np.ndarray  # (pool, pool, pool, C)
    points: np.ndarray    # (pool, pool, pool, 3)
    outside: bool


def roi_crop3d(volume: FeatureVolume3D, box: Box9, pool: int = 5) -> RoiFeature:
    """Trilinear samples on a ``pool^3`` lattice inside the box's axis-aligned bound.

    Lattice points are the cell midpoints of a ``pool``-way subdivision, so
    ``pool=1`` samples the box center. ``outside`` is set when no sample
    falls inside the volume (the features are then all zero).
    """
    if pool < 1:
        raise ValueError("pool must be >= 1")
    corners = box_corners(box)
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    steps = (np.arange(pool) + 0.5) / pool
    axes = [lo[k] + steps * (hi[k] - lo[k]) for k in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    feats, inside = trilinear_sample(volume, pts)
    return RoiFeature(feats, pts, not bool(inside.any()))


def stx(query_tokens, frame_tokens, params: AttentionParams) -> AttentionOutput:
    """Query-to-frame cross-attention; one output token per query token."""
    if isinstance(frame_tokens, FeatureVolume3D):
        frame_tokens = frame_tokens.values.reshape(-1, frame_tokens.values.shape[-1])
    q = np.asarray(query_tokens, dtype=float)
    q = q.reshape(-1, q.shape[-1])
    return mha(q, frame_tokens, frame_tokens, None, params)


def temporal_window_mask(frames: int, tokens: int, window: int) -> np.ndarray:
    t = np.repeat(np.arange(frames), tokens)
    return np.abs(t[:, None] - t[None, :]) <= window


def sttx(f_seq, window: int, params: AttentionParams) -> AttentionOutput:
    """Windowed spatio-temporal self-attention over a (T, N, C) sequence.

    Tokens of frames ``t`` and ``t'`` may attend to each other only when
    ``|t - t'| <= window``. The output has shape (T, N, C_out).
    """
    f = np.asarray(f_seq, dtype=float)
    if window < 0:
        raise ValueError("window must be >= 0")
    T, N, C = f.shape
    flat = f.reshape(T * N, C)
    att = mha(flat, flat, flat, temporal_window_mask(T, N, window), params)
    att.output = att.output.reshape(T, N, -1)
    return att


# --------------------------------------------------------------------------
# demo harness with digests
# --------------------------------------------------------------------------

DEMO_SCALES = {
    # tokens (H=W), channels, volume edge, heads, frames
    "desk": dict(tokens=8, channels=16, voxels=8, heads=4, frames=4),
    "full": dict(tokens=8, channels=16, voxels=16, heads=4, frames=4),
}
DEMO_WORKSPACE = ((0.0, -2.0, -1.0), (10.0, 2.0, 1.0))
FUSION_VARIANTS = ("add", "daf", "gaf", "paf")


def checksum(a) -> str:
    arr = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    return hashlib.sha256(arr.tobytes()).hexdigest()


def loop_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Scalar-loop element-wise sum used as an independent oracle."""
    out = np.empty_like(a)
    for idx in np.ndindex(*a.shape):
        out[idx] = a[idx] + b[idx]
    return out


def weight_row_deviation(weights: list[np.ndarray]) -> float:
    dev = 0.0
    for w in weights:
        if w.size:
            dev = max(dev, float(np.max(np.abs(w.sum(axis=-1) - 1.0))))
    return dev


def demo_camera(scale: str = "desk") -> PinholeCamera:
    return PinholeCamera.looking_along_x((-1.0, 0.0, 0.0), 48.0, 48.0, 64, 64)


def fuse_demo(seed: int = 0, scale: str = "desk", variant: str = "daf",
              workers: int = 1) -> dict:
    """Run one fusion variant plus query crop, STX and STTX on seeded inputs.

    Returns a JSON-ready digest document.
    """
    if variant not in FUSION_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if scale not in DEMO_SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    cfg = DEMO_SCALES[scale]
    rng = np.random.default_rng(seed)
    c, n, t = cfg["channels"], cfg["voxels"], cfg["frames"]
    camera = demo_camera(scale)
    fmaps = [FeatureMap2D(rng.normal(size=(cfg["tokens"], cfg["tokens"], c))) for _ in range(t)]
    vols = [FeatureVolume3D(rng.normal(size=(n, n, n, c)), *DEMO_WORKSPACE) for _ in range(t)]
    params = AttentionParams.random(c, cfg["heads"], seed=seed + 1)
    ffn = FeedForward.random(c, seed=seed + 2)

    fused, weights, extra = [], [], {}
    for fm, vol in zip(fmaps, vols):
        if variant == "add":
            lifted = lift(fm, camera, n, (1.0, 11.0))
            aligned = splat_lifted(lifted, vol)
            out = add_fuse(vol, aligned)
            extra.setdefault("oracle_checksums", []).append(checksum(loop_add(vol.values, aligned)))
            extra.setdefault("passthrough_identical", True)
            fused.append(out)
            continue
        if variant == "daf":
            res = daf_fuse(vol, lift(fm, camera, n, (1.0, 11.0)), camera, params,
                           residual=True, ffn=ffn, workers=workers)
        elif variant == "gaf":
            res = gaf_fuse(vol, fm, sinusoidal_depth_encoding(n, c), params,
                           residual=True, workers=workers)
        else:
            res = paf_fuse(vol, fm, camera, params, residual=True, workers=workers)
        if res.mask is not None:
            same = np.array_equal(res.volume.values[~res.mask], vol.values[~res.mask])
            extra["passthrough_identical"] = extra.get("passthrough_identical", True) and same
            extra["passthrough_voxels"] = extra.get("passthrough_voxels", 0) + int((~res.mask).sum())
        weights.extend(res.weights)
        fused.append(res.volume)

    query_box = Box9((5.0, 0.0, 0.0), (2.0, 1.0, 0.8), (0.3, 0.0, 0.0))
    roi = roi_crop3d(fused[0], query_box, pool=5)
    q_tokens = roi.features.reshape(-1, c)
    stx_outs = []
    for vol in fused:
        att = stx(q_tokens, vol, params)
        weights.append(att.weights)
        stx_outs.append(att.output)
    f_seq = np.stack(stx_outs)
    st = sttx(f_seq, min(2, t - 1), params)
    weights.append(st.weights)

    doc = {
        "schema": "vql3d.fuse-demo/1",
        "seed": seed,
        "scale": scale,
        "variant": variant,
        "volume_shape": [n, n, n, c],
        "frames": t,
        "slice_checksums": [[checksum(v.values[k]) for k in range(n)] for v in fused],
        "fused_checksums": [checksum(v.values) for v in fused],
        "roi_checksum": checksum(roi.features),
        "stx_checksum": checksum(f_seq),
        "sttx_checksum": checksum(st.output),
        "attention_calls": len(weights),
        "weight_row_sum_max_dev": weight_row_deviation(weights),
    }
    if variant == "add":
        doc["oracle_match"] = doc["fused_checksums"] == extra["oracle_checksums"]
    doc["passthrough_identical"] = bool(extra.get("passthrough_identical", True))
    doc["passthrough_voxels"] = int(extra.get("passthrough_voxels", 0))
    return doc
