"""Garage world model: vehicle geometry, parking slots, obstacles, ground map.

The ground map is a row-major label grid whose world origin sits at the grid
corner (min x, min y); row r / col c covers
[origin + c*res, origin + (c+1)*res) x [origin + r*res, origin + (r+1)*res).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, point_in_polygon, polygon_area, to_world

# Ground map semantic classes.
FREESPACE = 0
LANE_LINE = 1
SLOT_LINE = 2

WORLD_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.7
    width: float = 1.9
    length: float = 4.4
    rear_overhang: float = 0.9  # rear axle to rear bumper
    max_steer: float = 0.6
    max_speed: float = 2.0

    def __post_init__(self):
        if min(self.wheelbase, self.width, self.length, self.rear_overhang,
               self.max_steer, self.max_speed) <= 0:
            raise ValueError("vehicle parameters must be positive")
        if self.max_steer >= math.pi / 2:
            raise ValueError("max_steer must be below pi/2")
        if self.rear_overhang >= self.length:
            raise ValueError("rear_overhang must be smaller than length")

    @property
    def min_turn_radius(self) -> float:
        return self.wheelbase / math.tan(self.max_steer)


@dataclass(frozen=True)
class SlotSpec:
    """A parking slot: counter-clockwise corner quad plus the parked target pose."""

    corners: np.ndarray  # (4, 2) world frame, counter-clockwise
    entry_edge: int  # index of the edge (corner i -> i+1) open to the aisle
    target_pose: Pose2  # rear-axle reference of the parked vehicle

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=float).reshape(4, 2)
        object.__setattr__(self, "corners", corners)
        if polygon_area(corners) <= 0:
            raise ValueError("slot corners must be counter-clockwise with positive area")
        if not 0 <= self.entry_edge <= 3:
            raise ValueError("entry_edge must be in 0..3")
        if not point_in_polygon(self.target_pose.xy, corners):
            raise ValueError("target pose must lie inside the slot quad")

    @property
    def center(self) -> np.ndarray:
        return self.corners.mean(axis=0)


@dataclass(frozen=True)
class BoxObstacle:
    """Axis-aligned vertical box (walls, pillars, parked vehicles)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: float = 1.6

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max or self.height <= 0:
            raise ValueError("degenerate obstacle box")

    @property
    def footprint(self) -> np.ndarray:
        return np.array(
            [
                [self.x_min, self.y_min],
                [self.x_max, self.y_min],
                [self.x_max, self.y_max],
                [self.x_min, self.y_max],
            ]
        )


@dataclass
class GarageWorld:
    ground_labels: np.ndarray  # (rows, cols) uint8 class labels, row-major
    origin: np.ndarray  # world (x, y) of the grid corner at row 0, col 0
    resolution: float  # meters per cell
    obstacles: list[BoxObstacle] = field(default_factory=list)
    slots: list[SlotSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.ground_labels = np.asarray(self.ground_labels, dtype=np.uint8)
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        # structural obstacles must not partially block a slot; a box fully
        # contained in one slot is a parked vehicle and is allowed
        from .geometry import convex_polygons_intersect, points_in_convex_quad

        for obs in self.obstacles:
            fp = obs.footprint
            for slot in self.slots:
                center = slot.corners.mean(axis=0)
                shrunk = center + (slot.corners - center) * 0.995
                if convex_polygons_intersect(fp, shrunk) and not bool(
                    points_in_convex_quad(fp, slot.corners).all()
                ):
                    raise ValueError("obstacle partially overlaps a slot interior")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max) of the mapped area."""
        rows, cols = self.ground_labels.shape
        return (
            float(self.origin[0]),
            float(self.origin[1]),
            float(self.origin[0] + cols * self.resolution),
            float(self.origin[1] + rows * self.resolution),
        )

    def label_at(self, x, y):
        """Ground class at world point(s); outside the map -> FREESPACE."""
        xs = np.asarray(x, dtype=float)
        ys = np.asarray(y, dtype=float)
        cols = np.floor((xs - self.origin[0]) / self.resolution).astype(int)
        rows = np.floor((ys - self.origin[1]) / self.resolution).astype(int)
        n_rows, n_cols = self.ground_labels.shape
        valid = (rows >= 0) & (rows < n_rows) & (cols >= 0) & (cols < n_cols)
        out = np.full(np.shape(xs), FREESPACE, dtype=np.uint8)
        out[valid] = self.ground_labels[rows[valid], cols[valid]]
        return out


def vehicle_footprint(pose: Pose2, params: VehicleParams) -> np.ndarray:
    """Counter-clockwise rectangle of the body, rear axle at `pose`."""
    x0 = -params.rear_overhang
    x1 = params.length - params.rear_overhang
    h = params.width / 2.0
    body = np.array([[x0, -h], [x1, -h], [x1, h], [x0, h]])
    return to_world(pose, body)


def footprint_center(pose: Pose2, params: VehicleParams) -> np.ndarray:
    return vehicle_footprint(pose, params).mean(axis=0)


def _paint_segment(labels, origin, res, a, b, thickness, value):
    """Rasterize a line segment of given thickness into the label grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = thickness / 2.0
    lo = np.minimum(a, b) - half
    hi = np.maximum(a, b) + half
    c0 = max(0, int(np.floor((lo[0] - origin[0]) / res)))
    r0 = max(0, int(np.floor((lo[1] - origin[1]) / res)))
    c1 = min(labels.shape[1], int(np.ceil((hi[0] - origin[0]) / res)) + 1)
    r1 = min(labels.shape[0], int(np.ceil((hi[1] - origin[1]) / res)) + 1)
    if c0 >= c1 or r0 >= r1:
        return
    cs = origin[0] + (np.arange(c0, c1) + 0.5) * res
    rs = origin[1] + (np.arange(r0, r1) + 0.5) * res
    gx, gy = np.meshgrid(cs, rs)
    d = b - a
    denom = float(d @ d)
    if denom < 1e-12:
        t = np.zeros_like(gx)
    else:
        t = np.clip(((gx - a[0]) * d[0] + (gy - a[1]) * d[1]) / denom, 0.0, 1.0)
    dist = np.hypot(gx - (a[0] + t * d[0]), gy - (a[1] + t * d[1]))
    mask = dist <= half
    labels[r0:r1, c0:c1][mask] = value


def make_parking_world(
    scene: str,
    params: VehicleParams,
    rng: np.random.Generator,
    n_slots: int = 6,
    slot_width: float = 2.6,
    slot_depth: float = 5.5,
    aisle_width: float = 7.0,
    map_resolution: float = 0.1,
    line_thickness: float = 0.12,
) -> tuple[GarageWorld, int]:
    """Build a one-row garage for scene A (open), B (neighbor car), or C (walls).

    Slots sit at y in [0, slot_depth], opening upward into the aisle; the
    parked target pose faces the aisle (tail-in). Returns (world, target slot index).
    """
    if scene not in ("A", "B", "C"):
        raise ValueError(f"unknown scene {scene!r}")
    side_margin = 4.0
    x0 = 0.0
    row_width = n_slots * slot_width
    x_min = x0 - side_margin
    x_max = x0 + row_width + side_margin
    y_min = -1.5
    y_max = slot_depth + aisle_width + 1.0

    cols = int(round((x_max - x_min) / map_resolution))
    rows = int(round((y_max - y_min) / map_resolution))
    labels = np.full((rows, cols), FREESPACE, dtype=np.uint8)
    origin = np.array([x_min, y_min])

    slots = []
    rear_gap = (slot_depth - params.length) / 2.0
    for i in range(n_slots):
        sx = x0 + i * slot_width
        corners = np.array(
            [
                [sx, 0.0],
                [sx + slot_width, 0.0],
                [sx + slot_width, slot_depth],
                [sx, slot_depth],
            ]
        )
        target = Pose2(sx + slot_width / 2.0, rear_gap + params.rear_overhang, math.pi / 2.0)
        slots.append(SlotSpec(corners=corners, entry_edge=2, target_pose=target))
        for e in range(4):
            if e == 2:
                continue  # entry edge stays unpainted
            _paint_segment(labels, origin, map_resolution, corners[e], corners[(e + 1) % 4],
                           line_thickness, SLOT_LINE)
    # lane line along the far side of the aisle
    lane_y = slot_depth + aisle_width - 0.3
    _paint_segment(labels, origin, map_resolution, (x_min, lane_y), (x_max, lane_y),
                   line_thickness, LANE_LINE)

    target_idx = int(rng.integers(1, n_slots - 1))
    obstacles: list[BoxObstacle] = []
    if scene == "B":
        side = 1 if rng.random() < 0.5 else -1
        nb = slots[target_idx + side]
        cx = float(nb.center[0])
        obstacles.append(
            BoxObstacle(
                x_min=cx - params.width / 2.0,
                x_max=cx + params.width / 2.0,
                y_min=rear_gap,
                y_max=rear_gap + params.length,
                height=1.5,
            )
        )
    elif scene == "C":
        # wall behind the slot row plus a wall segment across the aisle
        obstacles.append(BoxObstacle(x_min=x_min, x_max=x_max, y_min=y_min, y_max=-0.3, height=2.2))
        tx = float(slots[target_idx].center[0])
        obstacles.append(
            BoxObstacle(
                x_min=tx - 4.0,
                x_max=tx + 4.0,
                y_min=slot_depth + aisle_width - 0.4,
                y_max=slot_depth + aisle_width + 0.4,
                height=2.2,
            )
        )
    world = GarageWorld(
        ground_labels=labels, origin=origin, resolution=map_resolution,
        obstacles=obstacles, slots=slots,
    )
    return world, target_idx


def _rle_encode(flat: np.ndarray) -> list[list[int]]:
    runs = []
    if len(flat) == 0:
        return runs
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(flat)]])
    for s, e in zip(starts, ends):
        runs.append([int(flat[s]), int(e - s)])
    return runs


def _rle_decode(runs: list[list[int]], n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.uint8)
    pos = 0
    for value, count in runs:
        out[pos:pos + count] = value
        pos += count
    if pos != n:
        raise ValueError("run-length data does not match grid size")
    return out


def world_to_dict(world: GarageWorld) -> dict:
    rows, cols = world.ground_labels.shape
    return {
        "schema_version": WORLD_SCHEMA_VERSION,
        "ground_map": {
            "rows": rows,
            "cols": cols,
            "resolution": world.resolution,
            "origin": [float(world.origin[0]), float(world.origin[1])],
            "labels_rle": _rle_encode(world.ground_labels.reshape(-1)),
        },
        "obstacles": [
            {"x_min": o.x_min, "x_max": o.x_max, "y_min": o.y_min, "y_max": o.y_max,
             "height": o.height}
            for o in world.obstacles
        ],
        "slots": [
            {
                "corners": [[float(v) for v in c] for c in s.corners],
                "entry_edge": s.entry_edge,
                "target_pose": [s.target_pose.x, s.target_pose.y, s.target_pose.yaw],
            }
            for s in world.slots
        ],
    }


def world_from_dict(data: dict) -> GarageWorld:
    if data.get("schema_version") != WORLD_SCHEMA_VERSION:
        raise ValueError(f"unsupported world schema version {data.get('schema_version')}")
    gm = data["ground_map"]
    labels = _rle_decode(gm["labels_rle"], gm["rows"] * gm["cols"]).reshape(gm["rows"], gm["cols"])
    return GarageWorld(
        ground_labels=labels,
        origin=np.array(gm["origin"], dtype=float),
        resolution=float(gm["resolution"]),
        obstacles=[BoxObstacle(**o) for o in data["obstacles"]],
        slots=[
            SlotSpec(
                corners=np.array(s["corners"], dtype=float),
                entry_edge=int(s["entry_edge"]),
                target_pose=Pose2(*s["target_pose"]),
            )
            for s in data["slots"]
        ],
    )


def save_world(world: GarageWorld, path) -> None:
    with open(path, "w") as f:
        json.dump(world_to_dict(world), f, sort_keys=True)
        f.write("\n")


def load_world(path) -> GarageWorld:
    with open(path) as f:
        return world_from_dict(json.load(f))
