"""Path tracking: rear-wheel feedback steering, cascade PID actuation, and
dead-reckoned relative pose.

The tracker consumes bare 2-D waypoints in the frame of the pose where the
plan was installed (the plan frame). It splits them into constant-direction
legs at cusps, drives leg by leg with a full stop at each gear change, and
localizes purely by integrating chassis feedback with the same integrator the
simulator uses, so its relative pose matches simulated ground truth exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angle_f
from .world import VehicleParams

STOP_SPEED = 0.02  # m/s: below this the vehicle counts as stopped


# --- shared bicycle integrator (also used by the simulator) -----------------


def integrate_bicycle_rk4(pose: Pose2, speed: float, steer: float, dt: float,
                          wheelbase: float) -> Pose2:
    """One RK4 step of the kinematic bicycle with inputs held constant."""
    omega = speed * math.tan(steer) / wheelbase

    def deriv(yaw):
        return speed * math.cos(yaw), speed * math.sin(yaw), omega

    k1 = deriv(pose.yaw)
    k2 = deriv(pose.yaw + 0.5 * dt * k1[2])
    k3 = deriv(pose.yaw + 0.5 * dt * k2[2])
    k4 = deriv(pose.yaw + dt * k3[2])
    dx = dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    dy = dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    dyaw = dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return Pose2(pose.x + dx, pose.y + dy, pose.yaw + dyaw)


def dead_reckon_update(rel_pose: Pose2, speed: float, steer: float, dt: float,
                       params: VehicleParams) -> Pose2:
    """Advance the plan-frame relative pose from chassis feedback."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if speed == 0.0:
        return Pose2(rel_pose.x, rel_pose.y, rel_pose.yaw)
    return integrate_bicycle_rk4(rel_pose, speed, steer, dt, params.wheelbase)


# --- PID ---------------------------------------------------------------------


@dataclass
class PidState:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    integral_limit: float = 1.0
    output_limit: float = math.inf
    integral: float = 0.0
    prev_error: float | None = None

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None


def pid_step(state: PidState, setpoint: float, feedback: float, dt: float) -> float:
    """Discrete PID with clamped integrator; derivative on error."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = setpoint - feedback
    state.integral = min(max(state.integral + err * dt, -state.integral_limit),
                         state.integral_limit)
    d = 0.0 if state.prev_error is None else (err - state.prev_error) / dt
    state.prev_error = err
    u = state.kp * err + state.ki * state.integral + state.kd * d
    return min(max(u, -state.output_limit), state.output_limit)


# --- rear-wheel feedback law ---------------------------------------------------


@dataclass(frozen=True)
class RwfGains:
    k_theta: float = 1.0
    k_e: float = 0.5


def rwf_curvature(e: float, theta_e: float, kappa: float, gains: RwfGains) -> float:
    """Commanded path curvature for lateral error e, heading error theta_e,
    and path curvature kappa, all in the (mirrored-forward) travel frame."""
    denom = 1.0 - kappa * e
    if denom <= 1e-6:
        return math.copysign(1e6, kappa if kappa != 0.0 else -e)
    sinc = 1.0 if abs(theta_e) < 1e-9 else math.sin(theta_e) / theta_e
    return (
        kappa * math.cos(theta_e) / denom
        - gains.k_theta * theta_e
        - gains.k_e * sinc * e
    )


def steer_from_curvature(curvature: float, params: VehicleParams) -> float:
    steer = math.atan(curvature * params.wheelbase)
    return min(max(steer, -params.max_steer), params.max_steer)


# --- waypoint legs -------------------------------------------------------------


@dataclass
class Leg:
    points: np.ndarray  # (M, 2) plan frame, travel order
    direction: int  # +1 forward, -1 reverse
    cum_s: np.ndarray  # (M,) cumulative arc length
    tangents: np.ndarray  # (M, 2) unit travel tangents
    curvature: np.ndarray  # (M,) signed travel-frame curvature

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])


def _leg_from_points(points: np.ndarray, direction: int) -> Leg:
    pts = np.asarray(points, dtype=float)
    deltas = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(deltas, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    tangents = deltas / seg_len[:, None]
    tangents = np.vstack([tangents, tangents[-1]])
    psi = np.arctan2(tangents[:, 1], tangents[:, 0])
    kappa = np.zeros(len(pts))
    if len(pts) > 2:
        for i in range(1, len(pts) - 1):
            ds = 0.5 * (seg_len[i - 1] + seg_len[i])
            kappa[i] = wrap_angle_f(psi[i] - psi[i - 1]) / max(ds, 1e-9)
        kappa[0] = kappa[1]
        kappa[-1] = kappa[-2]
    return Leg(points=pts, direction=direction, cum_s=cum, tangents=tangents, curvature=kappa)


def split_legs(waypoints: np.ndarray, min_point_gap: float = 0.08,
               cusp_cos: float = -0.25) -> list[Leg]:
    """Split plan-frame waypoints into constant-direction legs.

    The plan frame origin (current rear axle, heading +x) is prepended as the
    first path point. Direction flips where consecutive travel tangents
    reverse; near-duplicate points are dropped first.
    """
    pts = [np.zeros(2)]
    for p in np.atleast_2d(np.asarray(waypoints, dtype=float)):
        if np.linalg.norm(p - pts[-1]) >= min_point_gap:
            pts.append(p)
    if len(pts) < 2:
        return []
    pts = np.array(pts)
    deltas = np.diff(pts, axis=0)
    units = deltas / np.linalg.norm(deltas, axis=1)[:, None]

    legs: list[Leg] = []
    heading = np.array([1.0, 0.0])
    direction = 1 if float(units[0] @ heading) >= 0.0 else -1
    leg_pts = [pts[0], pts[1]]
    for i in range(1, len(units)):
        body_axis = units[i - 1] * direction  # vehicle heading along previous segment
        flip = float(units[i] @ units[i - 1]) < cusp_cos
        if flip:
            legs.append(_leg_from_points(np.array(leg_pts), direction))
            direction = 1 if float(units[i] @ body_axis) >= 0.0 else -1
            leg_pts = [pts[i], pts[i + 1]]
        else:
            leg_pts.append(pts[i + 1])
    legs.append(_leg_from_points(np.array(leg_pts), direction))
    return legs


def locate_on_leg(leg: Leg, position: np.ndarray) -> tuple[float, float, float, float]:
    """Project a plan-frame position onto the leg.

    Returns (s_along, lateral_error, path_yaw, kappa); the lateral error is
    positive left of the path in the travel direction.
    """
    p = np.asarray(position, dtype=float)
    pts = leg.points
    d = np.diff(pts, axis=0)
    seg_len2 = (d * d).sum(axis=1)
    rel = p[None, :] - pts[:-1]
    t = np.clip((rel * d).sum(axis=1) / np.maximum(seg_len2, 1e-12), 0.0, 1.0)
    proj = pts[:-1] + t[:, None] * d
    dist2 = ((p[None, :] - proj) ** 2).sum(axis=1)
    i = int(np.argmin(dist2))
    s = float(leg.cum_s[i] + t[i] * math.sqrt(seg_len2[i]))
    tangent = leg.tangents[i]
    offset = p - proj[i]
    e = float(tangent[0] * offset[1] - tangent[1] * offset[0])
    path_yaw = float(math.atan2(tangent[1], tangent[0]))
    frac = t[i]
    kappa = float((1 - frac) * leg.curvature[i] + frac * leg.curvature[min(i + 1, len(pts) - 1)])
    return s, e, path_yaw, kappa


def rwf_steer(
    waypoints: np.ndarray,
    relative_pose: Pose2,
    speed: float,
    params: VehicleParams,
    gains: RwfGains,
    last_steer: float = 0.0,
) -> float:
    """Rear-wheel-feedback steering toward a waypoint path (plan frame).

    At standstill the previous steer is held. Reverse motion is handled by
    mirroring: heading flipped by pi, forward law applied, steer negated.
    """
    if abs(speed) < 1e-9:
        return last_steer
    legs = split_legs(waypoints)
    if not legs:
        return last_steer
    direction = 1 if speed > 0 else -1
    leg = next((l for l in legs if l.direction == direction), legs[0])
    _, e, path_yaw, kappa = locate_on_leg(leg, relative_pose.xy)
    heading = relative_pose.yaw if leg.direction > 0 else wrap_angle_f(relative_pose.yaw + math.pi)
    theta_e = wrap_angle_f(heading - path_yaw)
    curv = rwf_curvature(e, theta_e, kappa, gains)
    steer = steer_from_curvature(curv, params)
    return steer if leg.direction > 0 else -steer


# --- cascade controller --------------------------------------------------------


@dataclass(frozen=True)
class ControlCommand:
    target_steer: float
    target_speed: float
    gear: str  # "forward" | "reverse"
    done: bool = False


@dataclass(frozen=True)
class ControllerConfig:
    gains: RwfGains = field(default_factory=RwfGains)
    parking_speed: float = 0.7
    min_speed: float = 0.12
    taper_distance: float = 1.0
    leg_end_tolerance: float = 0.06
    replan_period: float = 3.0
    replan_cross_track: float = 0.5
    replan_hold_distance: float = 1.5
    steer_pid: tuple[float, float, float] = (1.2, 0.5, 0.0)
    speed_pid: tuple[float, float, float] = (0.8, 0.4, 0.0)


class TrajectoryTracker:
    """Tracks the active plan with dead-reckoned relative pose and cascade PIDs."""

    def __init__(self, params: VehicleParams, cfg: ControllerConfig):
        self.params = params
        self.cfg = cfg
        self.legs: list[Leg] = []
        self.leg_idx = 0
        self.rel_pose = Pose2()
        self.phase = "done"  # track | switch | stopping | done
        self.last_steer = 0.0
        self.cross_track = 0.0
        self.time_since_plan = 0.0
        self._dr_armed = False
        kp, ki, kd = cfg.steer_pid
        self._steer_pid = PidState(kp=kp, ki=ki, kd=kd, integral_limit=0.4,
                                   output_limit=params.max_steer)
        kp, ki, kd = cfg.speed_pid
        self._speed_pid = PidState(kp=kp, ki=ki, kd=kd, integral_limit=0.5,
                                   output_limit=cfg.parking_speed)

    # -- plan management --

    def install(self, waypoints: np.ndarray) -> None:
        """Install a new plan expressed in the current ego frame; resets the
        relative pose to identity and the dead-reckoning integration."""
        self.legs = split_legs(waypoints)
        self.leg_idx = 0
        self.rel_pose = Pose2()
        self.phase = "track" if self.legs else "stopping"
        self.cross_track = 0.0
        self.time_since_plan = 0.0
        self._dr_armed = False
        self._steer_pid.reset()
        self._speed_pid.reset()

    @property
    def has_plan(self) -> bool:
        return bool(self.legs) or self.phase != "done"

    def remaining_distance(self) -> float:
        if not self.legs or self.phase == "done":
            return 0.0
        leg = self.legs[self.leg_idx]
        s, _, _, _ = locate_on_leg(leg, self.rel_pose.xy)
        rem = max(leg.length - s, 0.0)
        for leg in self.legs[self.leg_idx + 1:]:
            rem += leg.length
        return rem

    def wants_replan(self) -> bool:
        if self.phase in ("stopping", "done"):
            return False
        if self.remaining_distance() < self.cfg.replan_hold_distance:
            return False
        return (
            self.time_since_plan >= self.cfg.replan_period
            or self.cross_track > self.cfg.replan_cross_track
        )

    # -- control step --

    def step(self, feedback_speed: float, feedback_steer: float, dt: float) -> ControlCommand:
        """One control tick; feedback is the chassis state over the last dt."""
        if self._dr_armed:
            self.rel_pose = dead_reckon_update(
                self.rel_pose, feedback_speed, feedback_steer, dt, self.params
            )
        else:
            self._dr_armed = True
        self.time_since_plan += dt

        if not self.legs:
            return self._stop_command(feedback_speed, feedback_steer, dt, done=True)

        leg = self.legs[self.leg_idx]
        s, e, path_yaw, kappa = locate_on_leg(leg, self.rel_pose.xy)
        self.cross_track = abs(e)
        remaining = leg.length - s
        last_leg = self.leg_idx == len(self.legs) - 1

        if self.phase == "track" and remaining <= self.cfg.leg_end_tolerance:
            self.phase = "stopping" if last_leg else "switch"
        if self.phase == "switch" and abs(feedback_speed) < STOP_SPEED:
            self.leg_idx += 1
            self.phase = "track"
            leg = self.legs[self.leg_idx]
            s, e, path_yaw, kappa = locate_on_leg(leg, self.rel_pose.xy)
            remaining = leg.length - s
            last_leg = self.leg_idx == len(self.legs) - 1
        if self.phase in ("switch", "stopping"):
            done = self.phase == "stopping" and abs(feedback_speed) < STOP_SPEED
            if done:
                self.phase = "done"
            return self._stop_command(feedback_speed, feedback_steer, dt,
                                      done=done or self.phase == "done",
                                      gear=leg.direction)
        if self.phase == "done":
            return self._stop_command(feedback_speed, feedback_steer, dt, done=True,
                                      gear=leg.direction)

        # steering: mirrored forward law, negated for reverse
        heading = self.rel_pose.yaw if leg.direction > 0 else wrap_angle_f(
            self.rel_pose.yaw + math.pi)
        theta_e = wrap_angle_f(heading - path_yaw)
        steer_ff = steer_from_curvature(rwf_curvature(e, theta_e, kappa, self.cfg.gains),
                                        self.params)
        target_steer = steer_ff if leg.direction > 0 else -steer_ff
        self.last_steer = target_steer

        # speed schedule with terminal taper on the current leg
        v_mag = self.cfg.parking_speed
        if remaining < self.cfg.taper_distance:
            v_mag = max(self.cfg.min_speed,
                        self.cfg.parking_speed * remaining / self.cfg.taper_distance)
        target_speed = leg.direction * v_mag

        steer_cmd = target_steer + pid_step(self._steer_pid, target_steer, feedback_steer, dt)
        steer_cmd = min(max(steer_cmd, -self.params.max_steer), self.params.max_steer)
        speed_cmd = target_speed + pid_step(self._speed_pid, target_speed, feedback_speed, dt)
        limit = self.cfg.parking_speed
        speed_cmd = min(max(speed_cmd, -limit), limit)
        return ControlCommand(
            target_steer=steer_cmd,
            target_speed=speed_cmd,
            gear="forward" if leg.direction > 0 else "reverse",
            done=False,
        )

    def _stop_command(self, feedback_speed: float, feedback_steer: float, dt: float,
                      done: bool, gear: int = 1) -> ControlCommand:
        speed_cmd = pid_step(self._speed_pid, 0.0, feedback_speed, dt)
        limit = self.cfg.parking_speed
        speed_cmd = min(max(speed_cmd, -limit), limit)
        return ControlCommand(
            target_steer=self.last_steer,
            target_speed=speed_cmd,
            gear="forward" if gear > 0 else "reverse",
            done=done,
        )
