"""Geometry of 9-DoF oriented boxes.

Axis convention (fixed here and used everywhere in the package):

* x is longitudinal (forward), y is lateral (left), z is vertical (up).
* ``yaw`` rotates about z, ``pitch`` about y, ``roll`` about x.
* Rotations are intrinsic, applied yaw then pitch then roll, so
  ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
* A box's local frame has its length ``l`` along local x, width ``w``
  along local y and height ``h`` along local z.

Box intersection is exact for convex inputs: the first box's polytope is
clipped against the six half-spaces of the second and the clipped volume
is summed from signed tetrahedra around the vertex centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Points within this distance (m) of a clipping plane count as on the plane.
PLANE_TOL = 1e-9

# Corner i has x sign from bit 0, y sign from bit 1, z sign from bit 2
# (0 -> negative half extent, 1 -> positive).
_CORNER_SIGNS = np.array(
    [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=float
) * 2.0 - 1.0

# Outward-oriented (counter-clockwise seen from outside) face cycles.
BOX_FACES = (
    (0, 4, 6, 2),  # -x
    (1, 3, 7, 5),  # +x
    (0, 1, 5, 4),  # -y
    (2, 6, 7, 3),  # +y
    (0, 2, 3, 1),  # -z
    (4, 5, 7, 6),  # +z
)


def normalize_angle(a: float) -> float:
    """Wrap an angle in radians to the half-open interval (-pi, pi]."""
    a = float(a)
    if -math.pi < a <= math.pi:
        return a
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_angles(a):
    """Vectorized :func:`normalize_angle` for differences of angles."""
    a = np.asarray(a, dtype=float)
    r = np.remainder(a + math.pi, TWO_PI) - math.pi
    return np.where(r <= -math.pi, r + TWO_PI, r)


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rotation matrix ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def euler_from_matrix(r: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`rotation_matrix` away from gimbal lock (|pitch| < pi/2)."""
    r = np.asarray(r, dtype=float)
    pitch = math.asin(max(-1.0, min(1.0, -r[2, 0])))
    yaw = math.atan2(r[1, 0], r[0, 0])
    roll = math.atan2(r[2, 1], r[2, 2])
    return yaw, pitch, roll


@dataclass(frozen=True)
class Box9:
    """Oriented box: center (m), size ``(l, w, h)`` (m), rotation ``(yaw, pitch, roll)`` (rad).

    Angles are normalized to (-pi, pi] on construction.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        rotation = tuple(normalize_angle(v) for v in self.rotation)
        if len(center) != 3 or len(size) != 3 or len(rotation) != 3:
            raise ValueError("Box9 needs 3 center, 3 size and 3 rotation values")
        if not all(math.isfinite(v) for v in center + size + rotation):
            raise ValueError(f"non-finite box parameters: {center + size + rotation}")
        if min(size) <= 0.0:
            raise ValueError(f"box size must be strictly positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "rotation", rotation)

    @classmethod
    def from_array(cls, params: Sequence[float]) -> "Box9":
        """Build from ``(x, y, z, l, w, h, yaw, pitch, roll)``."""
        p = [float(v) for v in params]
        if len(p) != 9:
            raise ValueError(f"expected 9 box parameters, got {len(p)}")
        return cls(tuple(p[0:3]), tuple(p[3:6]), tuple(p[6:9]))

    def to_array(self) -> np.ndarray:
        return np.array(self.center + self.size + self.rotation, dtype=float)

    def to_list(self) -> list[float]:
        return list(self.center + self.size + self.rotation)

    @property
    def volume(self) -> float:
        l, w, h = self.size
        return l * w * h

    @cached_property
    def matrix(self) -> np.ndarray:
        return rotation_matrix(*self.rotation)

    def corners(self) -> np.ndarray:
        return box_corners(self)

    def replace(self, center=None, size=None, rotation=None) -> "Box9":
        return Box9(
            self.center if center is None else center,
            self.size if size is None else size,
            self.rotation if rotation is None else rotation,
        )


def box_corners(b: Box9) -> np.ndarray:
    """The 8 corners of ``b`` as an (8, 3) array.

    Corner ``i`` sits at local offset ``(±l/2, ±w/2, ±h/2)`` with the x sign
    taken from bit 0 of ``i``, y from bit 1 and z from bit 2; index 0 is the
    all-negative corner and index 7 the all-positive one.
    """
    half = 0.5 * np.asarray(b.size)
    local = _CORNER_SIGNS * half
    return local @ b.matrix.T + np.asarray(b.center)


def points_in_box(points: np.ndarray, b: Box9, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of the rows of ``points`` lying inside ``b``."""
    local = (np.asarray(points, dtype=float) - np.asarray(b.center)) @ b.matrix
    half = 0.5 * np.asarray(b.size) + tol
    return np.all(np.abs(local) <= half, axis=-1)


def transform_box(b: Box9, rot: np.ndarray, trans) -> Box9:
    """Apply the rigid motion ``x -> rot @ x + trans`` to a box."""
    rot = np.asarray(rot, dtype=float)
    center = rot @ np.asarray(b.center) + np.asarray(trans, dtype=float)
    return Box9(tuple(center), b.size, euler_from_matrix(rot @ b.matrix))


# --------------------------------------------------------------------------
# convex polytopes and half-space clipping
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvexPolytope:
    """Convex polytope with outward-oriented face cycles indexing ``vertices``."""

    vertices: np.ndarray
    faces: tuple[tuple[int, ...], ...]

    @classmethod
    def from_box(cls, b: Box9) -> "ConvexPolytope":
        return cls(box_corners(b), BOX_FACES)

    @classmethod
    def from_polygons(cls, polygons: list[np.ndarray], tol: float = 1e-10) -> "ConvexPolytope":
        verts: list[np.ndarray] = []
        faces = []
        for poly in polygons:
            cycle: list[int] = []
            for p in poly:
                idx = next(
                    (i for i, v in enumerate(verts) if np.max(np.abs(v - p)) <= tol), None
                )
                if idx is None:
                    verts.append(np.asarray(p, dtype=float))
                    idx = len(verts) - 1
                if not cycle or (cycle[-1] != idx and cycle[0] != idx):
                    cycle.append(idx)
            if len(cycle) >= 3:
                faces.append(tuple(cycle))
        v = np.array(verts, dtype=float).reshape(-1, 3)
        return cls(v, tuple(faces))

    def polygons(self) -> list[np.ndarray]:
        return [self.vertices[list(f)] for f in self.faces]

    @property
    def volume(self) -> float:
        return _polygons_volume(self.polygons())

    def clip(self, normal, offset: float, tol: float = PLANE_TOL) -> "ConvexPolytope":
        """Keep the part with ``normal . x <= offset``."""
        polys = _clip_polygons(self.polygons(), np.asarray(normal, dtype=float), offset, tol)
        return ConvexPolytope.from_polygons(polys)

    def is_convex(self, tol: float = PLANE_TOL) -> bool:
        for poly in self.polygons():
            n = _polygon_normal(poly)
            norm = np.linalg.norm(n)
            if norm == 0.0:
                continue
            n = n / norm
            if np.any((self.vertices - poly[0]) @ n > tol):
                return False
        return True


def _polygon_normal(poly: np.ndarray) -> np.ndarray:
    # Newell's method; robust for slightly non-planar cycles.
    nxt = np.roll(poly, -1, axis=0)
    return np.array(
        [
            np.sum((poly[:, 1] - nxt[:, 1]) * (poly[:, 2] + nxt[:, 2])),
            np.sum((poly[:, 2] - nxt[:, 2]) * (poly[:, 0] + nxt[:, 0])),
            np.sum((poly[:, 0] - nxt[:, 0]) * (poly[:, 1] + nxt[:, 1])),
        ]
    )


def _polygons_volume(polys: list[np.ndarray]) -> float:
    if len(polys) < 4:
        return 0.0
    ref = np.mean(np.concatenate(polys, axis=0), axis=0)
    total = 0.0
    for poly in polys:
        if len(poly) < 3:
            continue
        a = poly[0] - ref
        b = poly[1:-1] - ref
        c = poly[2:] - ref
        total += float(np.sum(np.cross(b, c) @ a))
    return max(total / 6.0, 0.0)


def _clip_polygon(poly: np.ndarray, dist: np.ndarray, tol: float):
    """Sutherland-Hodgman step; returns the kept cycle and its on-plane points."""
    kept = []
    on_plane = []
    k = len(poly)
    for i in range(k):
        s, e = poly[i - 1], poly[i]
        ds, de = dist[i - 1], dist[i]
        if de <= tol:
            if ds > tol and de < -tol:
                x = s + (ds / (ds - de)) * (e - s)
                kept.append(x)
                on_plane.append(x)
            kept.append(e)
            if de >= -tol:
                on_plane.append(e)
        elif ds < -tol:
            x = s + (ds / (ds - de)) * (e - s)
            kept.append(x)
            on_plane.append(x)
    return kept, on_plane


def _cap_polygon(points: list[np.ndarray], normal: np.ndarray) -> np.ndarray | None:
    pts: list[np.ndarray] = []
    for p in points:
        if not any(np.max(np.abs(p - q)) <= 1e-12 for q in pts):
            pts.append(p)
    if len(pts) < 3:
        return None
    pts_arr = np.array(pts)
    n = normal / np.linalg.norm(normal)
    # u, v span the plane with u x v = n so that ascending angle is CCW about n.
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    rel = pts_arr - pts_arr.mean(axis=0)
    order = np.argsort(np.arctan2(rel @ v, rel @ u), kind="stable")
    return pts_arr[order]


def _clip_polygons(polys, normal, offset, tol):
    out = []
    cap_points = []
    coplanar_face = False
    for poly in polys:
        d = poly @ normal - offset
        if np.all(np.abs(d) <= tol):
            coplanar_face = True
        kept, on_plane = _clip_polygon(poly, d, tol)
        if len(kept) >= 3:
            out.append(np.array(kept))
        cap_points.extend(on_plane)
    if not out:
        return []
    if not coplanar_face:
        cap = _cap_polygon(cap_points, normal)
        if cap is not None:
            out.append(cap)
    return out


def _box_halfspaces(b: Box9):
    r = b.matrix
    c = np.asarray(b.center)
    for k in range(3):
        n = r[:, k]
        h = 0.5 * b.size[k]
        nc = float(n @ c)
        yield n, nc + h
        yield -n, -nc + h


def intersection_polytope(a: Box9, b: Box9, tol: float = PLANE_TOL) -> ConvexPolytope:
    """The convex polytope ``a ∩ b`` (possibly empty)."""
    polys = [box_corners(a)[list(f)] for f in BOX_FACES]
    for normal, offset in _box_halfspaces(b):
        polys = _clip_polygons(polys, normal, offset, tol)
        if not polys:
            break
    return ConvexPolytope.from_polygons(polys)


def _order_pair(a: Box9, b: Box9) -> tuple[Box9, Box9]:
    ka = a.center + a.size + a.rotation
    kb = b.center + b.size + b.rotation
    return (a, b) if ka <= kb else (b, a)


def _aligned_overlap(a: Box9, b: Box9) -> float:
    # Both boxes share a rotation: overlap is an interval product in that frame.
    d = (np.asarray(b.center) - np.asarray(a.center)) @ a.matrix
    vol = 1.0
    for k in range(3):
        ha, hb = 0.5 * a.size[k], 0.5 * b.size[k]
        lo = max(-ha, d[k] - hb)
        hi = min(ha, d[k] + hb)
        if hi <= lo:
            return 0.0
        vol *= hi - lo
    return vol


def clipped_intersection_volume(a: Box9, b: Box9, tol: float = PLANE_TOL) -> float:
    """Intersection volume by half-space clipping only (no shortcuts)."""
    polys = [box_corners(a)[list(f)] for f in BOX_FACES]
    for normal, offset in _box_halfspaces(b):
        polys = _clip_polygons(polys, normal, offset, tol)
        if not polys:
            return 0.0
    return _polygons_volume(polys)


def intersection_volume(a: Box9, b: Box9) -> float:
    """Volume (m^3) of ``a ∩ b``, clamped to ``[0, min(vol(a), vol(b))]``."""
    a, b = _order_pair(a, b)
    gap = np.linalg.norm(np.subtract(a.center, b.center))
    if gap > 0.5 * (np.linalg.norm(a.size) + np.linalg.norm(b.size)):
        return 0.0
    if a.rotation == b.rotation:
        vol = _aligned_overlap(a, b)
    else:
        vol = clipped_intersection_volume(a, b)
    return min(vol, a.volume, b.volume)


def iou3d(a: Box9, b: Box9) -> float:
    """3D IoU of two oriented boxes. Symmetric by construction."""
    a, b = _order_pair(a, b)
    inter = intersection_volume(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.volume + b.volume - inter
    return min(1.0, inter / union)


def aabb_iou(a: Box9, b: Box9) -> float:
    """Closed-form IoU for rotation-free boxes (interval products)."""
    inter = 1.0
    for k in range(3):
        lo = max(a.center[k] - 0.5 * a.size[k], b.center[k] - 0.5 * b.size[k])
        hi = min(a.center[k] + 0.5 * a.size[k], b.center[k] + 0.5 * b.size[k])
        inter *= max(0.0, hi - lo)
    return inter / (a.volume + b.volume - inter)


def _hull_area_2d(points: np.ndarray) -> float:
    """Area of the convex hull of 2D points (monotone chain plus shoelace)."""
    pts = sorted(set(map(tuple, np.round(points, 15))))
    if len(pts) < 3:
        return 0.0

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    x, y = hull[:, 0], hull[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def giou7(a: Box9, b: Box9) -> float:
    """Generalized IoU after zeroing pitch and roll on both boxes.

    With pitch and roll removed both boxes are upright prisms, so the
    enclosing volume is the convex hull of their footprints times the joint
    vertical extent.
    """
    a = a.replace(rotation=(a.rotation[0], 0.0, 0.0))
    b = b.replace(rotation=(b.rotation[0], 0.0, 0.0))
    a, b = _order_pair(a, b)
    inter = intersection_volume(a, b)
    union = a.volume + b.volume - inter
    pts = np.concatenate([box_corners(a), box_corners(b)])
    hull = _hull_area_2d(pts[:, :2]) * float(pts[:, 2].max() - pts[:, 2].min())
    hull = max(hull, union)
    return max(-1.0, min(1.0, inter / union - (hull - union) / hull))


def _slab_mask(pts_t: np.ndarray, b: Box9) -> np.ndarray:
    # pts_t is (3, m); test lo <= n_k . x <= hi for the three box axes.
    proj = b.matrix.T @ pts_t
    nc = b.matrix.T @ np.asarray(b.center)
    mask = None
    for k in range(3):
        h = 0.5 * b.size[k]
        mk = (proj[k] >= nc[k] - h) & (proj[k] <= nc[k] + h)
        mask = mk if mask is None else mask & mk
    return mask


def mc_iou_oracle(a: Box9, b: Box9, n: int = 2_000_000, seed: int = 0,
                  chunk: int = 1_000_000) -> float:
    """Monte Carlo IoU estimate by uniform sampling in the joint bounding box.

    Each sample is classified with the two boxes' half-space (slab) tests;
    the estimate is ``#(a and b) / #(a or b)``. Deterministic for a seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    pts = np.concatenate([box_corners(a), box_corners(b)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    in_a = in_b = both = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = rng.random((3, m))
        x *= (hi - lo)[:, None]
        x += lo[:, None]
        ma = _slab_mask(x, a)
        mb = _slab_mask(x, b)
        in_a += int(np.count_nonzero(ma))
        in_b += int(np.count_nonzero(mb))
        both += int(np.count_nonzero(ma & mb))
        done += m
    union = in_a + in_b - both
    return both / union if union else 0.0


def random_box(rng: np.random.Generator, center_scale: float = 1.0,
               size_range: tuple[float, float] = (0.3, 2.0)) -> Box9:
    """A box with uniform center, size and full-range angles."""
    return Box9(
        tuple(rng.uniform(-center_scale, center_scale, 3)),
        tuple(rng.uniform(size_range[0], size_range[1], 3)),
        tuple(rng.uniform(-math.pi, math.pi, 3)),
    )


def random_overlapping_pairs(seed: int, count: int) -> list[tuple[Box9, Box9]]:
    """Seeded random 9-DoF box pairs with strictly positive intersection."""
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < count:
        a = random_box(rng)
        b = random_box(rng)
        b = b.replace(center=np.asarray(a.center) + rng.uniform(-0.6, 0.6, 3))
        if intersection_volume(a, b) > 0.0:
            pairs.append((a, b))
    return pairs
