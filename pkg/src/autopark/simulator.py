"""Closed-loop kinematic simulation: bicycle plant with first-order actuator
lags, collision/parking assessment, and the sense-plan-track-step episode loop.

Actuators update first with the exact discrete first-order lag, then the pose
integrates one RK4 step with the new speed/steer held constant. Because the
pose update is a pure function of (speed, steer, dt), a dead-reckoner fed the
same feedback stream reproduces the relative pose bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .control import (
    STOP_SPEED,
    ControllerConfig,
    TrajectoryTracker,
    integrate_bicycle_rk4,
)
from .geometry import Pose2, convex_polygons_intersect, points_in_convex_quad, wrap_angle_f
from .world import GarageWorld, SlotSpec, VehicleParams, vehicle_footprint


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    time_limit: float = 120.0
    steer_tau: float = 0.2
    speed_tau: float = 0.5

    def __post_init__(self):
        if self.dt <= 0 or self.steer_tau <= 0 or self.speed_tau <= 0:
            raise ValueError("dt and actuator time constants must be positive")


@dataclass(frozen=True)
class SimState:
    pose: Pose2
    speed: float = 0.0
    steer: float = 0.0
    t: float = 0.0


def bicycle_step(state: SimState, target_speed: float, target_steer: float,
                 dt: float, params: VehicleParams, cfg: SimConfig) -> SimState:
    """Advance one tick: exact first-order actuator lags, then RK4 kinematics."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a_v = 1.0 - math.exp(-dt / cfg.speed_tau)
    a_s = 1.0 - math.exp(-dt / cfg.steer_tau)
    target_speed = min(max(target_speed, -params.max_speed), params.max_speed)
    target_steer = min(max(target_steer, -params.max_steer), params.max_steer)
    speed = state.speed + (target_speed - state.speed) * a_v
    steer = state.steer + (target_steer - state.steer) * a_s
    if speed == 0.0:
        pose = state.pose
    else:
        pose = integrate_bicycle_rk4(state.pose, speed, steer, dt, params.wheelbase)
    return SimState(pose=pose, speed=speed, steer=steer, t=state.t + dt)


def check_collision(pose: Pose2, params: VehicleParams, world: GarageWorld) -> bool:
    """True when the vehicle footprint hits an obstacle or leaves the map."""
    fp = vehicle_footprint(pose, params)
    x_min, y_min, x_max, y_max = world.bounds
    if fp[:, 0].min() < x_min or fp[:, 0].max() > x_max:
        return True
    if fp[:, 1].min() < y_min or fp[:, 1].max() > y_max:
        return True
    return any(convex_polygons_intersect(fp, box.footprint) for box in world.obstacles)


def _shrunk(quad: np.ndarray, margin: float) -> np.ndarray:
    center = quad.mean(axis=0)
    return center + (quad - center) * (1.0 - margin)


def check_parked(
    pose: Pose2,
    speed: float,
    slot: SlotSpec,
    params: VehicleParams,
    all_slots: list[SlotSpec] | None = None,
) -> str | None:
    """Parking assessment once the vehicle is stationary.

    success:   stopped with the footprint fully inside the target slot.
    violation: stopped, footprint center in the slot but protruding, without
               entering any other slot's interior.
    wrong_slot: stopped fully inside some non-target slot.
    None:      still moving, or none of the above applies.
    """
    if abs(speed) >= STOP_SPEED:
        return None
    fp = vehicle_footprint(pose, params)
    inside_target = bool(points_in_convex_quad(fp, slot.corners).all())
    if inside_target:
        return "success"
    others = [s for s in (all_slots or []) if s is not slot]
    center_in = bool(points_in_convex_quad(fp.mean(axis=0)[None, :], slot.corners)[0])
    if center_in:
        intrudes = any(
            convex_polygons_intersect(fp, _shrunk(s.corners, 0.01)) for s in others
        )
        if not intrudes:
            return "violation"
        return None
    for s in others:
        if bool(points_in_convex_quad(fp, s.corners).all()):
            return "wrong_slot"
    return None


@dataclass
class EpisodeResult:
    outcome: str  # success | wrong_slot | violation | collision | timeout
    final_pose: Pose2
    duration: float
    position_error: float | None = None  # meters, success/violation only
    orientation_error: float | None = None  # degrees, success/violation only
    trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))
    n_replans: int = 0

    TRACE_COLUMNS = ("t", "x", "y", "yaw", "speed", "steer")


PolicyFn = Callable[[Pose2], np.ndarray]
"""Maps the current world pose to ego-frame (N, 2) waypoints."""


def pose_errors(pose: Pose2, target: Pose2) -> tuple[float, float]:
    pos = math.hypot(pose.x - target.x, pose.y - target.y)
    ori = abs(math.degrees(wrap_angle_f(pose.yaw - target.yaw)))
    return pos, ori


def run_episode(
    policy: PolicyFn,
    world: GarageWorld,
    slot: SlotSpec,
    start: Pose2,
    params: VehicleParams,
    control_cfg: ControllerConfig,
    sim_cfg: SimConfig,
) -> EpisodeResult:
    """Sense -> (re)plan -> track -> integrate until parked, collided, or timed out.

    The tracker is replanned through `policy` per the controller's replan
    triggers; a stopped-and-done state that does not assess as parked ends the
    episode as a timeout at the current clock.
    """
    state = SimState(pose=start)
    tracker = TrajectoryTracker(params, control_cfg)
    tracker.install(policy(start))
    n_replans = 0
    trace = [(state.t, start.x, start.y, start.yaw, 0.0, 0.0)]

    def finish(outcome: str) -> EpisodeResult:
        pos_err = ori_err = None
        if outcome in ("success", "violation"):
            pos_err, ori_err = pose_errors(state.pose, slot.target_pose)
        return EpisodeResult(
            outcome=outcome,
            final_pose=state.pose,
            duration=state.t,
            position_error=pos_err,
            orientation_error=ori_err,
            trace=np.array(trace),
            n_replans=n_replans,
        )

    if check_collision(start, params, world):
        return finish("collision")
    while state.t < sim_cfg.time_limit - 0.5 * sim_cfg.dt:
        if tracker.wants_replan():
            tracker.install(policy(state.pose))
            n_replans += 1
        cmd = tracker.step(state.speed, state.steer, sim_cfg.dt)
        state = bicycle_step(state, cmd.target_speed, cmd.target_steer,
                             sim_cfg.dt, params, sim_cfg)
        trace.append((state.t, state.pose.x, state.pose.y, state.pose.yaw,
                      state.speed, state.steer))
        if check_collision(state.pose, params, world):
            return finish("collision")
        if cmd.done and abs(state.speed) < STOP_SPEED:
            assessment = check_parked(state.pose, state.speed, slot, params, world.slots)
            return finish(assessment if assessment else "timeout")
    return finish("timeout")


def expert_policy(world: GarageWorld, slot: SlotSpec, params: VehicleParams,
                  spacing: float = 0.5) -> PolicyFn:
    """Controller-validation policy: replan the expert path from the current pose."""
    from .expert import PlanningFailure, plan_expert_path
    from .geometry import to_ego

    def plan(pose: Pose2) -> np.ndarray:
        try:
            poses = plan_expert_path(pose, slot, world, params, spacing=spacing)
        except PlanningFailure:
            return np.zeros((0, 2))
        return to_ego(pose, np.array([[p.x, p.y] for p in poses]))

    return plan
