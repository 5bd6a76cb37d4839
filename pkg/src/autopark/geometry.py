"""Planar rigid-body (SE2) poses and small polygon utilities.

Conventions used across the whole package:
  * poses are (x, y, yaw) with yaw wrapped to (-pi, pi]
  * the vehicle reference point is the rear-axle center
  * ego frame: +x forward, +y left
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap an angle (scalar or array) to (-pi, pi]."""
    return math.pi - np.remainder(math.pi - np.asarray(a), TWO_PI)


def wrap_angle_f(a: float) -> float:
    return float(wrap_angle(a))


@dataclass(frozen=True)
class Pose2:
    """SE(2) pose. yaw is stored wrapped to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.yaw})")
        object.__setattr__(self, "yaw", wrap_angle_f(self.yaw))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw])


IDENTITY = Pose2(0.0, 0.0, 0.0)


def se2_compose(a: Pose2, b: Pose2) -> Pose2:
    """Rigid-body composition a ⊕ b (b expressed in a's frame)."""
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2(
        a.x + b.x * c - b.y * s,
        a.y + b.x * s + b.y * c,
        wrap_angle_f(a.yaw + b.yaw),
    )


def se2_inverse(p: Pose2) -> Pose2:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return Pose2(-(p.x * c + p.y * s), p.x * s - p.y * c, -p.yaw)


def se2_relative(a: Pose2, b: Pose2) -> Pose2:
    """Pose of b expressed in a's frame: inverse(a) ⊕ b."""
    return se2_compose(se2_inverse(a), b)


def to_ego(ego: Pose2, points) -> np.ndarray:
    """Express world-frame point(s) in the ego frame (translate, then rotate by -yaw).

    Accepts a single (2,) point or an (N, 2) array; returns the same shape.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    dx = pts[:, 0] - ego.x
    dy = pts[:, 1] - ego.y
    out = np.stack([dx * c + dy * s, -dx * s + dy * c], axis=1)
    return out[0] if single else out


def to_world(ego: Pose2, points) -> np.ndarray:
    """Inverse of to_ego: ego-frame point(s) back into the world frame."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    out = np.stack(
        [ego.x + pts[:, 0] * c - pts[:, 1] * s, ego.y + pts[:, 0] * s + pts[:, 1] * c], axis=1
    )
    return out[0] if single else out


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counter-clockwise vertex order)."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _on_segment(p, a, b, eps=1e-12) -> bool:
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if abs(cross) > eps * (1.0 + abs(b[0] - a[0]) + abs(b[1] - a[1])):
        return False
    dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])
    return -eps <= dot <= (b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2 + eps


def point_in_polygon(point, poly) -> bool:
    """Even-odd test; points on the boundary count as inside."""
    p = np.asarray(point, dtype=float)
    verts = np.asarray(poly, dtype=float)
    n = len(verts)
    for i in range(n):
        if _on_segment(p, verts[i], verts[(i + 1) % n]):
            return True
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = verts[i]
        xj, yj = verts[j]
        if (yi > p[1]) != (yj > p[1]):
            x_cross = xi + (p[1] - yi) * (xj - xi) / (yj - yi)
            if p[0] < x_cross:
                inside = not inside
        j = i
    return inside


def points_in_convex_quad(points: np.ndarray, quad: np.ndarray) -> np.ndarray:
    """Vectorized inclusion test of (N, 2) points in a convex quad (boundary inclusive)."""
    pts = np.asarray(points, dtype=float)
    q = np.asarray(quad, dtype=float)
    if polygon_area(q) < 0:
        q = q[::-1]
    ok = np.ones(len(pts), dtype=bool)
    for i in range(4):
        a, b = q[i], q[(i + 1) % 4]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        ok &= cross >= -1e-12
    return ok


def convex_polygons_intersect(poly_a, poly_b) -> bool:
    """Separating-axis test for two convex polygons (touching counts as intersecting)."""
    a = np.asarray(poly_a, dtype=float)
    b = np.asarray(poly_b, dtype=float)
    for poly in (a, b):
        n = len(poly)
        for i in range(n):
            edge = poly[(i + 1) % n] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a @ axis
            pb = b @ axis
            if pa.max() < pb.min() - 1e-12 or pb.max() < pa.min() - 1e-12:
                return False
    return True
