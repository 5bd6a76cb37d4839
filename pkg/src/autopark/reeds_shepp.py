"""Shortest curvature-bounded paths for a car that can drive forward and reverse.

Classical closed-form curve families (CSC, CCC, CCCC, CCSC, CCSCC) solved in
unit-turning-radius coordinates; every candidate is generated through the
time-flip / reflect / reverse symmetries of the base formulas. Segment values
are signed arc parameters: positive means forward motion, negative reverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, wrap_angle_f

EPS = 1e-10


def _polar(x: float, y: float) -> tuple[float, float]:
    return math.hypot(x, y), math.atan2(y, x)


def _m2pi(a: float) -> float:
    """Wrap to [-pi, pi)."""
    v = math.fmod(a, 2.0 * math.pi)
    if v < -math.pi:
        v += 2.0 * math.pi
    elif v >= math.pi:
        v -= 2.0 * math.pi
    return v


@dataclass(frozen=True)
class RSPath:
    letters: tuple[str, ...]  # 'L', 'S', 'R' per segment
    values: tuple[float, ...]  # signed arc parameters (unit radius)

    @property
    def length(self) -> float:
        return sum(abs(v) for v in self.values)

    @property
    def n_cusps(self) -> int:
        signs = [v for v in self.values if abs(v) > EPS]
        return sum(1 for a, b in zip(signs, signs[1:]) if a * b < 0)


# --- base formula solvers; each returns (t, u, v) or None ------------------


def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -EPS:
        v = _m2pi(phi - t)
        if v >= -EPS:
            return t, u, v
    return None


def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    if u1 * u1 >= 4.0:
        u = math.sqrt(u1 * u1 - 4.0)
        theta = math.atan2(2.0, u)
        t = _m2pi(t1 + theta)
        v = _m2pi(t - phi)
        if t >= -EPS and v >= -EPS:
            return t, u, v
    return None


def _lp_rm_l(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = _m2pi(theta + 0.5 * u + math.pi)
        v = _m2pi(phi - t + u)
        if t >= -EPS and u <= EPS:
            return t, u, v
    return None


def _tau_omega(u, v, xi, eta, phi):
    delta = _m2pi(u - v)
    a = math.sin(u) - math.sin(delta)
    b = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * a - xi * b, xi * a + eta * b)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _m2pi(t1 + math.pi) if t2 < 0 else _m2pi(t1)
    omega = _m2pi(tau - u + v - phi)
    return tau, omega


def _lp_rup_lum_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.hypot(xi, eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= -EPS and v <= EPS:
            return t, u, v
    return None


def _lp_rum_lum_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -0.5 * math.pi:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= -EPS and v >= -EPS:
                return t, u, v
    return None


def _lp_rm_sm_lm(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    rho = math.hypot(xi, eta)
    if rho >= 2.0:
        w = math.sqrt(rho * rho - 4.0)
        u = 2.0 - w
        t = _m2pi(0.5 * math.pi + math.atan2(2.0, w) - math.atan2(-eta, xi))
        v = _m2pi(phi - 0.5 * math.pi - t)
        if t >= -EPS and u <= EPS and v <= EPS:
            return t, u, v
    return None


def _lp_rm_sm_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = _m2pi(t + 0.5 * math.pi - phi)
        if t >= -EPS and u <= EPS and v <= EPS:
            return t, u, v
    return None


def _lp_rm_s_lm_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = math.hypot(xi, eta)
    if rho >= 2.0:
        w = math.sqrt(rho * rho - 4.0)
        u = 4.0 - w
        if u <= EPS:
            t = _m2pi(0.5 * math.pi + math.atan2(2.0, w) - math.atan2(-eta, xi))
            v = _m2pi(t - phi)
            if t >= -EPS and v >= -EPS:
                return t, u, v
    return None


# (solver, letters, value layout, include reversed-word variants)
_HALF_PI = 0.5 * math.pi
_BASE = [
    (_lp_sp_lp, ("L", "S", "L"), lambda t, u, v: (t, u, v), False),
    (_lp_sp_rp, ("L", "S", "R"), lambda t, u, v: (t, u, v), False),
    (_lp_rm_l, ("L", "R", "L"), lambda t, u, v: (t, u, v), True),
    (_lp_rup_lum_rm, ("L", "R", "L", "R"), lambda t, u, v: (t, u, -u, v), False),
    (_lp_rum_lum_rp, ("L", "R", "L", "R"), lambda t, u, v: (t, u, u, v), False),
    (_lp_rm_sm_lm, ("L", "R", "S", "L"), lambda t, u, v: (t, -_HALF_PI, u, v), True),
    (_lp_rm_sm_rm, ("L", "R", "S", "R"), lambda t, u, v: (t, -_HALF_PI, u, v), True),
    (_lp_rm_s_lm_rp, ("L", "R", "S", "L", "R"),
     lambda t, u, v: (t, -_HALF_PI, u, -_HALF_PI, v), False),
]
_SWAP = {"L": "R", "R": "L", "S": "S"}


def _variants(x, y, phi):
    return (
        (x, y, phi, False, False),
        (-x, y, -phi, True, False),
        (x, -y, -phi, False, True),
        (-x, -y, phi, True, True),
    )


def all_paths(x: float, y: float, phi: float) -> list[RSPath]:
    """All valid candidate paths to reach (x, y, phi) in unit-radius coordinates."""
    paths = []

    def emit(letters, values, timeflip, reflect, reverse):
        if reverse:
            letters = letters[::-1]
            values = values[::-1]
        if timeflip:
            values = tuple(-v for v in values)
        if reflect:
            letters = tuple(_SWAP[c] for c in letters)
        paths.append(RSPath(letters=letters, values=tuple(values)))

    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)
    for solver, letters, layout, backwards in _BASE:
        for vx, vy, vphi, flip, refl in _variants(x, y, phi):
            sol = solver(vx, vy, vphi)
            if sol is not None:
                emit(letters, layout(*sol), flip, refl, reverse=False)
        if backwards:
            for vx, vy, vphi, flip, refl in _variants(xb, yb, phi):
                sol = solver(vx, vy, vphi)
                if sol is not None:
                    emit(letters, layout(*sol), flip, refl, reverse=True)
    paths.sort(key=lambda p: (p.length, p.n_cusps))
    return paths


def solve(start: Pose2, goal: Pose2, turn_radius: float) -> list[RSPath]:
    """Candidate paths from start to goal, shortest first (lengths in scaled units)."""
    if turn_radius <= 0:
        raise ValueError("turn radius must be positive")
    dx = goal.x - start.x
    dy = goal.y - start.y
    c, s = math.cos(start.yaw), math.sin(start.yaw)
    x = (c * dx + s * dy) / turn_radius
    y = (-s * dx + c * dy) / turn_radius
    phi = wrap_angle_f(goal.yaw - start.yaw)
    return all_paths(x, y, phi)


def _advance(pose: Pose2, letter: str, tau: float, radius: float) -> Pose2:
    """End pose after driving a signed arc parameter tau along one segment."""
    x, y, th = pose.x, pose.y, pose.yaw
    if letter == "S":
        return Pose2(x + tau * radius * math.cos(th), y + tau * radius * math.sin(th), th)
    if letter == "L":
        return Pose2(
            x + radius * (math.sin(th + tau) - math.sin(th)),
            y + radius * (-math.cos(th + tau) + math.cos(th)),
            th + tau,
        )
    if letter == "R":
        return Pose2(
            x + radius * (-math.sin(th - tau) + math.sin(th)),
            y + radius * (math.cos(th - tau) - math.cos(th)),
            th - tau,
        )
    raise ValueError(f"unknown segment letter {letter!r}")


def end_pose(path: RSPath, start: Pose2, radius: float) -> Pose2:
    pose = start
    for letter, value in zip(path.letters, path.values):
        pose = _advance(pose, letter, value, radius)
    return pose


def sample_path(
    path: RSPath, start: Pose2, radius: float, spacing: float
) -> tuple[list[Pose2], list[int], list[float]]:
    """Sample a path at <= spacing arc length, keeping segment joints.

    Returns (poses, directions, curvatures): direction is +-1 for the motion
    sense at each point, curvature is signed in the direction of travel
    (left-positive); both describe the segment the point starts.
    """
    poses: list[Pose2] = [start]
    dirs: list[int] = [1]
    curvatures: list[float] = [0.0]
    pose = start
    first = True
    for letter, value in zip(path.letters, path.values):
        if abs(value) < EPS:
            continue
        seg_len = abs(value) * radius
        n = max(1, math.ceil(seg_len / spacing - 1e-9))
        direction = 1 if value > 0 else -1
        kappa = {"S": 0.0, "L": 1.0 / radius, "R": -1.0 / radius}[letter] * direction
        if first:
            dirs[0] = direction
            curvatures[0] = kappa
            first = False
        for i in range(1, n + 1):
            poses.append(_advance(pose, letter, value * i / n, radius))
            dirs.append(direction)
            curvatures.append(kappa)
        pose = poses[-1]
    return poses, dirs, curvatures
