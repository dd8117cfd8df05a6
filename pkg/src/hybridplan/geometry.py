"""Collision geometry: capsules vs. point clouds inside a tunnel region.

The arm's safety value at a configuration is the minimum over its (non
excluded) capsules of the segment-to-cloud distance minus radius and margin,
while the capsule segment stays inside the tunnel box; a capsule leaving the
box is scored by its penetration depth so the value stays negative until the
arm is pulled back in.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .kinematics import BodyPoint, RobotModel, _jacobian_from_chain


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Capsule:
    """Segment with a radius."""

    p0: np.ndarray
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        if p0.shape != (3,) or p1.shape != (3,):
            raise GeometryError("capsule endpoints must be 3-vectors")
        if not (np.isfinite(p0).all() and np.isfinite(p1).all()):
            raise GeometryError("capsule endpoints must be finite")
        if self.radius <= 0.0 or not np.isfinite(self.radius):
            raise GeometryError(f"capsule radius must be positive, got {self.radius}")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)


def _segment_sqdist(points: np.ndarray, p0: np.ndarray, p1: np.ndarray):
    """Squared distance from each point to segment [p0, p1]."""
    d = p1 - p0
    dd = float(d @ d)
    rel = points - p0
    if dd == 0.0:
        diff = rel
    else:
        t = np.clip((rel @ d) / dd, 0.0, 1.0)
        diff = rel - t[:, None] * d
    return np.einsum("ij,ij->i", diff, diff)


def _segment_closest_point(point: np.ndarray, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    d = p1 - p0
    dd = float(d @ d)
    if dd == 0.0:
        return p0.copy()
    t = float(np.clip((point - p0) @ d / dd, 0.0, 1.0))
    return p0 + t * d


class PointCloud:
    """Point set with a uniform voxel grid for nearest-to-segment queries.

    The grid query is exact: it expands cell shells around the segment's cell
    bounding box and stops only once no unscanned shell can hold a closer
    point, so results (distance and witness index, lowest index on ties)
    match a brute-force scan bit for bit.
    """

    def __init__(self, points, cell_size: float | None = None):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise GeometryError(f"points must be (P, 3), got {points.shape}")
        if points.shape[0] == 0:
            raise GeometryError("point cloud must contain at least one point")
        if not np.isfinite(points).all():
            raise GeometryError("point cloud contains non-finite values")
        self.points = points
        if cell_size is None:
            extent = float(np.max(points.max(axis=0) - points.min(axis=0)))
            cell_size = extent / 32.0 if extent > 0.0 else 1.0
        if cell_size <= 0.0 or not np.isfinite(cell_size):
            raise GeometryError(f"cell size must be positive, got {cell_size}")
        self.cell_size = float(cell_size)
        keys = np.floor(points / self.cell_size).astype(np.int64)
        self._key_lo = keys.min(axis=0)
        self._key_hi = keys.max(axis=0)
        grid: dict[tuple[int, int, int], list[int]] = {}
        for idx, key in enumerate(map(tuple, keys)):
            grid.setdefault(key, []).append(idx)
        self._grid = {k: np.asarray(v, dtype=np.int64) for k, v in grid.items()}

    def __len__(self) -> int:
        return self.points.shape[0]

    def _shell_cells(self, lo, hi, k):
        """Cells on shell k around integer box [lo, hi], clipped to the grid."""
        a = lo - k
        b = hi + k
        ga, gb = self._key_lo, self._key_hi
        if np.any(b < ga) or np.any(a > gb):
            return
        xs = range(max(a[0], ga[0]), min(b[0], gb[0]) + 1)
        ys = range(max(a[1], ga[1]), min(b[1], gb[1]) + 1)
        zs = range(max(a[2], ga[2]), min(b[2], gb[2]) + 1)
        if k == 0:
            yield from itertools.product(xs, ys, zs)
            return
        for x in (a[0], b[0]):
            if ga[0] <= x <= gb[0]:
                for y in ys:
                    for z in zs:
                        yield (x, y, z)
        xs_in = range(max(a[0] + 1, ga[0]), min(b[0] - 1, gb[0]) + 1)
        for y in (a[1], b[1]):
            if ga[1] <= y <= gb[1]:
                for x in xs_in:
                    for z in zs:
                        yield (x, y, z)
        ys_in = range(max(a[1] + 1, ga[1]), min(b[1] - 1, gb[1]) + 1)
        for z in (a[2], b[2]):
            if ga[2] <= z <= gb[2]:
                for x in xs_in:
                    for y in ys_in:
                        yield (x, y, z)

    def nearest_to_segment(self, p0, p1) -> tuple[float, int]:
        """Distance from segment [p0, p1] to the cloud plus the witness index."""
        p0 = np.asarray(p0, dtype=float)
        p1 = np.asarray(p1, dtype=float)
        cell = self.cell_size
        lo = np.floor(np.minimum(p0, p1) / cell).astype(np.int64)
        hi = np.floor(np.maximum(p0, p1) / cell).astype(np.int64)
        best_d2 = np.inf
        best_idx = -1
        # Shells below the Chebyshev gap to the grid's key box hold no cells.
        k = max(0, int(np.maximum(self._key_lo - hi, lo - self._key_hi).max()))
        # Shells whose index range already spans the whole grid mark the last
        # round: after that every occupied cell has been scanned.
        while True:
            if best_idx >= 0 and k >= 1 and ((k - 1) * cell) ** 2 > best_d2:
                break
            covered = bool(np.all(lo - k <= self._key_lo) and np.all(hi + k >= self._key_hi))
            chunks = [self._grid[c] for c in self._shell_cells(lo, hi, k) if c in self._grid]
            if chunks:
                cand = np.concatenate(chunks)
                d2 = _segment_sqdist(self.points[cand], p0, p1)
                m = float(d2.min())
                idx = int(cand[d2 == m].min())
                if m < best_d2 or (m == best_d2 and idx < best_idx):
                    best_d2 = m
                    best_idx = idx
            if covered:
                break
            k += 1
        if best_idx < 0:
            raise AssertionError("unreachable: nonempty cloud yielded no candidates")
        return float(np.sqrt(best_d2)), best_idx


def segment_cloud_distance(p0, p1, cloud: PointCloud) -> tuple[float, int]:
    """Minimum distance from a segment to a cloud and the achieving point
    index (lowest index on ties)."""
    return cloud.nearest_to_segment(p0, p1)


@dataclass(frozen=True)
class Box:
    """Oriented box: center, half extents, rotation (world from box frame)."""

    center: np.ndarray
    half_extents: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        half = np.asarray(self.half_extents, dtype=float)
        rot = np.asarray(self.rotation, dtype=float)
        if center.shape != (3,) or half.shape != (3,):
            raise GeometryError("box center and half_extents must be 3-vectors")
        if np.any(half <= 0.0):
            raise GeometryError(f"box half extents must be positive, got {half}")
        if rot.shape != (3, 3) or np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9:
            raise GeometryError("box rotation must be a 3x3 rotation matrix")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "half_extents", half)
        object.__setattr__(self, "rotation", rot)

    def to_local(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.center)

    def contains(self, p) -> bool:
        u = np.abs(self.to_local(p))
        return bool(np.all(u <= self.half_extents))

    def outside_depth(self, p) -> tuple[float, np.ndarray]:
        """Distance from an outside point to the box plus the unit direction
        pointing back toward the box (zero depth and direction inside)."""
        u = self.to_local(p)
        excess = np.abs(u) - self.half_extents
        over = np.maximum(excess, 0.0)
        depth = float(np.linalg.norm(over))
        if depth == 0.0:
            return 0.0, np.zeros(3)
        local_dir = -np.sign(u) * over / depth
        return depth, self.rotation @ local_dir

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "Box":
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        return Box(
            center=rotation @ self.center + translation,
            half_extents=self.half_extents.copy(),
            rotation=rotation @ self.rotation,
        )


@dataclass
class Scene:
    """Static collision world: wall cloud, tunnel box, capsule exclusions."""

    cloud: PointCloud
    tunnel: Box
    excluded_links: frozenset[int] = frozenset()
    safety_margin: float = 0.0

    def __post_init__(self):
        self.excluded_links = frozenset(int(i) for i in self.excluded_links)
        if self.safety_margin < 0.0:
            raise GeometryError(f"safety margin must be >= 0, got {self.safety_margin}")


@dataclass(frozen=True)
class Clearance:
    """Signed safety value plus the witness that produced it.

    kind is "cloud" for an in-tunnel nearest-point witness, "tunnel" for a
    capsule endpoint outside the tunnel box, "none" when no capsule was
    scored. direction is the unit vector along which the value increases,
    applied at body_point (a fixed point of the witness link).
    """

    value: float
    link: int | None = None
    point_index: int | None = None
    kind: str = "none"
    body_point: np.ndarray | None = None
    direction: np.ndarray | None = None


def _clearance_from_chain(model: RobotModel, frames, scene: Scene) -> Clearance:
    best: Clearance | None = None
    margin = scene.safety_margin
    for cap in model.link_capsules:
        if cap.link in scene.excluded_links:
            continue
        T = frames[cap.link]
        R = T[:3, :3]
        t = T[:3, 3]
        p0 = R @ cap.p0 + t
        p1 = R @ cap.p1 + t
        d0, dir0 = scene.tunnel.outside_depth(p0)
        d1, dir1 = scene.tunnel.outside_depth(p1)
        if d0 == 0.0 and d1 == 0.0:
            dist, idx = scene.cloud.nearest_to_segment(p0, p1)
            value = dist - cap.radius - margin
            obstacle = scene.cloud.points[idx]
            body = _segment_closest_point(obstacle, p0, p1)
            gap = body - obstacle
            direction = gap / dist if dist > 0.0 else np.zeros(3)
            cand = Clearance(value, cap.link, idx, "cloud", body, direction)
        else:
            # Max of a convex depth over a segment sits at an endpoint.
            if d0 >= d1:
                depth, direction, body = d0, dir0, p0
            else:
                depth, direction, body = d1, dir1, p1
            value = -depth - cap.radius
            cand = Clearance(value, cap.link, None, "tunnel", body, direction)
        if best is None or cand.value < best.value:
            best = cand
    if best is None:
        return Clearance(np.inf)
    return best


def signed_distance(model: RobotModel, q, scene: Scene) -> Clearance:
    """Signed safety value of the arm at q: positive only when every scored
    capsule stays inside the tunnel and clear of the cloud by more than its
    radius plus the safety margin."""
    frames, _, _ = model.chain(q)
    return _clearance_from_chain(model, frames, scene)


def clearance_and_gradient(model: RobotModel, q, scene: Scene):
    """Signed safety value plus its configuration-space gradient.

    The gradient treats the witness as a fixed body point: the witness link's
    positional Jacobian at that point, contracted with the improvement
    direction. One forward pass serves both evaluations.
    """
    frames, origins, axes = model.chain(q)
    c = _clearance_from_chain(model, frames, scene)
    if c.kind == "none" or c.direction is None or not np.any(c.direction):
        return c, np.zeros(model.dof)
    T = frames[c.link]
    local = T[:3, :3].T @ (c.body_point - T[:3, 3])
    jac = _jacobian_from_chain(model, frames, origins, axes, BodyPoint(c.link, local))
    return c, c.direction @ jac.matrix


def distance_gradient(model: RobotModel, q, scene: Scene) -> np.ndarray:
    """Gradient of signed_distance with respect to the joint state."""
    _, grad = clearance_and_gradient(model, q, scene)
    return grad
