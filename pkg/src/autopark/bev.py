"""Bird's-eye-view grid conventions, depth-weighted feature splatting, and the
target-slot heatmap.

Grid convention: row 0 is the top of the grid (max y), column 0 the left edge
(min x); cell (r, c) covers a resolution-sized square, and both the heatmap
and splat use cell centers / continuous coordinates under this convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, points_in_convex_quad, to_ego
from .sensing import SurroundRig, camera_ray_grid
from .world import SlotSpec


@dataclass(frozen=True)
class GridSpec:
    """Ego-centric BEV extent [-half_x, half_x] x [-half_y, half_y] meters."""

    half_x: float = 10.0
    half_y: float = 10.0
    resolution: float = 0.1

    def __post_init__(self):
        if self.resolution <= 0 or self.half_x <= 0 or self.half_y <= 0:
            raise ValueError("grid extents and resolution must be positive")
        for half, name in ((self.half_x, "x"), (self.half_y, "y")):
            cells = 2.0 * half / self.resolution
            if abs(cells - round(cells)) > 1e-9:
                raise ValueError(f"grid {name} extent must be an integer number of cells")

    @property
    def cols(self) -> int:
        return int(round(2.0 * self.half_x / self.resolution))

    @property
    def rows(self) -> int:
        return int(round(2.0 * self.half_y / self.resolution))

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class DepthBins:
    count: int = 24
    d_min: float = 0.5
    d_max: float = 12.5

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("need at least two depth bins")
        if not 0 < self.d_min < self.d_max:
            raise ValueError("require 0 < d_min < d_max")

    @property
    def centers(self) -> np.ndarray:
        step = (self.d_max - self.d_min) / self.count
        return self.d_min + (np.arange(self.count) + 0.5) * step


def bev_cell_of(point, grid: GridSpec):
    """Ego point -> (row, col), or None when outside the grid."""
    x, y = float(point[0]), float(point[1])
    col = math.floor((x + grid.half_x) / grid.resolution)
    row = math.floor((grid.half_y - y) / grid.resolution)
    if 0 <= row < grid.rows and 0 <= col < grid.cols:
        return row, col
    return None


def bev_cells_of(points: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Vectorized bev_cell_of: (N, 2) points -> flat cell index, -1 when outside."""
    pts = np.asarray(points, dtype=float)
    cols = np.floor((pts[:, 0] + grid.half_x) / grid.resolution).astype(np.int64)
    rows = np.floor((grid.half_y - pts[:, 1]) / grid.resolution).astype(np.int64)
    valid = (rows >= 0) & (rows < grid.rows) & (cols >= 0) & (cols < grid.cols)
    return np.where(valid, rows * grid.cols + cols, -1)


def cell_center(row: int, col: int, grid: GridSpec) -> tuple[float, float]:
    x = -grid.half_x + (col + 0.5) * grid.resolution
    y = grid.half_y - (row + 0.5) * grid.resolution
    return x, y


def cell_center_grid(grid: GridSpec) -> np.ndarray:
    """(rows*cols, 2) ego coordinates of every cell center, row-major."""
    xs = -grid.half_x + (np.arange(grid.cols) + 0.5) * grid.resolution
    ys = grid.half_y - (np.arange(grid.rows) + 0.5) * grid.resolution
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.reshape(-1), gy.reshape(-1)], axis=1)


def splat_cells(
    rig: SurroundRig, bins: DepthBins, feat_h: int, feat_w: int, grid: GridSpec
) -> np.ndarray:
    """Flat BEV cell index for every (camera, depth bin, feature pixel); -1 off-grid.

    Feature pixel (i, j) of an H_img x W_img feature map looks along the ray
    of the corresponding image-patch center; the point at ray depth d_k is
    projected onto the ground plane of the ego frame.
    """
    n_cams = len(rig)
    out = np.empty((n_cams, bins.count, feat_h, feat_w), dtype=np.int64)
    centers = bins.centers
    for cam, (intr, extr) in enumerate(rig.cameras):
        stride_u = intr.width / feat_w
        stride_v = intr.height / feat_h
        us = (np.arange(feat_w) + 0.5) * stride_u
        vs = (np.arange(feat_h) + 0.5) * stride_v
        gu, gv = np.meshgrid(us, vs)
        origin, dirs = camera_ray_grid(intr, extr, Pose2(), gu, gv)
        for k, d in enumerate(centers):
            pts = origin[None, :2] + d * dirs.reshape(-1, 3)[:, :2]
            out[cam, k] = bev_cells_of(pts, grid).reshape(feat_h, feat_w)
    return out


def lift_splat(
    features: np.ndarray,
    depth: np.ndarray,
    rig: SurroundRig,
    bins: DepthBins,
    grid: GridSpec,
) -> np.ndarray:
    """Sum-pool depth-weighted per-camera features into a (C, rows, cols) BEV grid.

    features: (R, C, H_img, W_img); depth: (R, D, H_img, W_img), each pixel's
    depth distribution must be nonnegative and sum to one over the D bins.
    """
    features = np.asarray(features, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if features.ndim != 4 or depth.ndim != 4:
        raise ValueError("features and depth must be 4-d (camera, channel/bin, H, W)")
    n_cams, n_ch, h, w = features.shape
    if depth.shape[0] != n_cams or depth.shape[2:] != (h, w):
        raise ValueError("features and depth shapes disagree")
    if n_cams != len(rig):
        raise ValueError("camera count does not match the rig")
    if depth.shape[1] != bins.count:
        raise ValueError("depth bin count does not match")
    if depth.min() < 0:
        raise ValueError("depth distribution must be nonnegative")
    sums = depth.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-5:
        raise ValueError("per-pixel depth distributions must sum to one")

    cells = splat_cells(rig, bins, h, w, grid)
    out = np.zeros((grid.n_cells, n_ch))
    for cam in range(n_cams):
        idx = cells[cam].reshape(-1)
        contrib = depth[cam].reshape(-1, 1) * np.tile(
            features[cam].reshape(n_ch, -1).T, (bins.count, 1)
        )
        keep = idx >= 0
        np.add.at(out, idx[keep], contrib[keep])
    return out.T.reshape(n_ch, grid.rows, grid.cols)


def make_target_heatmap(slot: SlotSpec, ego: Pose2, grid: GridSpec) -> np.ndarray:
    """Binary (1, rows, cols) mask of cell centers inside the slot quad (ego frame)."""
    quad = to_ego(ego, slot.corners)
    centers = cell_center_grid(grid)
    mask = points_in_convex_quad(centers, quad)
    return mask.astype(np.float32).reshape(1, grid.rows, grid.cols)
