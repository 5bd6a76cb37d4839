"""Synthetic expert: curvature-bounded parking paths and demonstration episodes.

The expert plays the role of the human driver: it plans a kinematically
feasible, collision-free path into the target slot, and each path pose
becomes one demonstration frame (surround images + future waypoint chunk).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import reeds_shepp as rs
from .geometry import Pose2, convex_polygons_intersect, se2_relative, to_ego
from .sensing import SurroundRig, render_surround_ids
from .world import BoxObstacle, GarageWorld, SlotSpec, VehicleParams, make_parking_world, \
    vehicle_footprint, world_to_dict


class PlanningFailure(Exception):
    """No feasible collision-free path was found."""


def _inflate(box: BoxObstacle, margin: float) -> BoxObstacle:
    return BoxObstacle(
        x_min=box.x_min - margin, x_max=box.x_max + margin,
        y_min=box.y_min - margin, y_max=box.y_max + margin, height=box.height,
    )


def _path_clear(
    poses: list[Pose2], world: GarageWorld, params: VehicleParams, margin: float
) -> bool:
    x_min, y_min, x_max, y_max = world.bounds
    boxes = [_inflate(b, margin) for b in world.obstacles]
    for pose in poses:
        fp = vehicle_footprint(pose, params)
        if fp[:, 0].min() < x_min or fp[:, 0].max() > x_max:
            return False
        if fp[:, 1].min() < y_min or fp[:, 1].max() > y_max:
            return False
        for box in boxes:
            if convex_polygons_intersect(fp, box.footprint):
                return False
    return True


def plan_expert_path(
    start: Pose2,
    slot: SlotSpec,
    world: GarageWorld,
    params: VehicleParams,
    spacing: float = 0.5,
    margin: float = 0.12,
    max_candidates: int = 80,
    radius_scale: float = 1.08,
) -> list[Pose2]:
    """Collision-free curvature-bounded path from start to the slot target pose.

    Tries shortest candidate curves first, then detours through staging poses
    on the slot axis. Raises PlanningFailure when nothing clears the scene.
    The planning radius keeps a small steering reserve for the tracker.
    """
    goal = slot.target_pose
    radius = params.min_turn_radius * radius_scale
    d_goal = math.hypot(start.x - goal.x, start.y - goal.y)
    if d_goal < 1e-9 and abs(start.yaw - goal.yaw) < 1e-9:
        return [start]

    def try_paths(a: Pose2, b: Pose2, limit: int) -> list[Pose2] | None:
        for path in rs.solve(a, b, radius)[:limit]:
            poses, _, _ = rs.sample_path(path, a, radius, spacing)
            if _path_clear(poses, world, params, margin):
                return poses
        return None

    direct = try_paths(start, goal, max_candidates)
    if direct is not None:
        return direct

    # staging fallback: reach a pose on the slot axis, then back straight in
    c, s = math.cos(goal.yaw), math.sin(goal.yaw)
    for d_stage in (3.0, 4.0, 5.0):
        stage = Pose2(goal.x + d_stage * c, goal.y + d_stage * s, goal.yaw)
        first = try_paths(start, stage, max_candidates // 2)
        if first is None:
            continue
        n = max(1, math.ceil(d_stage / spacing))
        tail = [
            Pose2(goal.x + d_stage * (1 - i / n) * c, goal.y + d_stage * (1 - i / n) * s, goal.yaw)
            for i in range(1, n + 1)
        ]
        if _path_clear(tail, world, params, margin):
            return first + tail
    raise PlanningFailure(f"no collision-free path from {start} to slot at {goal}")


def chunk_targets(trajectory, j: int, q: int) -> np.ndarray:
    """Future chunk for 1-based frame index j: element b is point min(j+b, N)."""
    pts = np.asarray(trajectory)
    n = len(pts)
    if not 1 <= j <= n:
        raise ValueError(f"frame index {j} outside 1..{n}")
    idx = np.minimum(j + np.arange(1, q + 1), n) - 1
    return pts[idx]


@dataclass
class Episode:
    """One demonstration: aligned frames (pose + surround images) and its world."""

    scene: str
    world: GarageWorld
    slot_index: int
    poses: list[Pose2]  # world frame, one per frame; also the trajectory points
    image_ids: np.ndarray  # (N, R, H, W) uint8 palette-id images
    seed: int

    @property
    def n_frames(self) -> int:
        return len(self.poses)

    @property
    def slot(self) -> SlotSpec:
        return self.world.slots[self.slot_index]

    def trajectory_world(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.poses])

    def trajectory_start_frame(self) -> np.ndarray:
        """Trajectory poses expressed in the frame of the first pose."""
        rel = [se2_relative(self.poses[0], p) for p in self.poses]
        return np.array([[p.x, p.y, p.yaw] for p in rel])


def sample_start_pose(
    rng: np.random.Generator,
    slot: SlotSpec,
    world: GarageWorld,
    params: VehicleParams,
    slot_depth: float,
    lateral_range: tuple[float, float] = (2.0, 5.0),
    forward_range: tuple[float, float] = (2.2, 3.6),
    yaw_jitter: float = 0.2,
    max_tries: int = 40,
) -> Pose2:
    """Random collision-free start in the aisle, roughly facing past the slot."""
    cx = float(slot.center[0])
    for _ in range(max_tries):
        side = -1.0 if rng.random() < 0.5 else 1.0
        dx = side * rng.uniform(*lateral_range)
        y = slot_depth + rng.uniform(*forward_range)
        yaw = (0.0 if dx < 0 else math.pi) + rng.uniform(-yaw_jitter, yaw_jitter)
        pose = Pose2(cx + dx, y, yaw)
        if _path_clear([pose], world, params, margin=0.05):
            return pose
    raise PlanningFailure("could not sample a collision-free start pose")


def generate_episode(
    seed_rng: np.random.Generator,
    scene: str,
    params: VehicleParams,
    rig: SurroundRig,
    spacing: float = 0.5,
    world_kwargs: dict | None = None,
    seed: int = 0,
) -> Episode:
    """World + start + expert path + rendered frames for one demonstration."""
    world_kwargs = world_kwargs or {}
    world, slot_idx = make_parking_world(scene, params, seed_rng, **world_kwargs)
    slot = world.slots[slot_idx]
    slot_depth = float(slot.corners[:, 1].max() - slot.corners[:, 1].min())
    start = sample_start_pose(seed_rng, slot, world, params, slot_depth)
    poses = plan_expert_path(start, slot, world, params, spacing=spacing)
    if len(poses) < 2:
        raise PlanningFailure("degenerate expert path")
    images = np.stack(
        [np.stack(render_surround_ids(world, pose, rig)) for pose in poses]
    ).astype(np.uint8)
    return Episode(
        scene=scene, world=world, slot_index=slot_idx, poses=poses,
        image_ids=images, seed=seed,
    )


@dataclass
class DatasetStats:
    requested: int
    kept: int
    failures: int
    total_samples: int
    chunk_in_range_fraction: float
    scenes: dict = field(default_factory=dict)


def episode_chunk_coverage(episode: Episode, q: int, half_x: float, half_y: float) -> tuple[int, int]:
    """(in-range points, total points) over all ego-frame future chunks."""
    traj = episode.trajectory_world()
    inside = 0
    total = 0
    for j in range(1, episode.n_frames + 1):
        chunk = chunk_targets(traj, j, q)
        rel = to_ego(episode.poses[j - 1], chunk)
        inside += int(((np.abs(rel[:, 0]) <= half_x) & (np.abs(rel[:, 1]) <= half_y)).sum())
        total += q
    return inside, total


def scene_for_episode(scene_cfg: str, rng: np.random.Generator) -> str:
    if scene_cfg == "mixed":
        return ("A", "B", "C")[int(rng.integers(0, 3))]
    return scene_cfg


def episode_to_tensors(episode: Episode, q: int, vocab, half_x: float, half_y: float):
    """Tensors + sidecar metadata for one episode file."""
    from .tokenizer import serialize_trajectory

    traj = episode.trajectory_world()
    tokens = np.empty((episode.n_frames, 2 * q + 2), dtype=np.uint16)
    for j in range(1, episode.n_frames + 1):
        chunk = to_ego(episode.poses[j - 1], chunk_targets(traj, j, q))
        tokens[j - 1] = serialize_trajectory(chunk, vocab, half_x, half_y)
    slot = episode.slot
    tensors = {
        "image_ids": episode.image_ids,
        "poses": np.array([[p.x, p.y, p.yaw] for p in episode.poses]),
        "tokens": tokens,
        "slot_corners": slot.corners.astype(float),
        "slot_target": np.array(
            [slot.target_pose.x, slot.target_pose.y, slot.target_pose.yaw]
        ),
    }
    meta = {
        "scene": episode.scene,
        "slot_index": episode.slot_index,
        "entry_edge": slot.entry_edge,
        "seed": episode.seed,
        "n_frames": episode.n_frames,
        "q_len": q,
        "world": world_to_dict(episode.world),
    }
    return tensors, meta
