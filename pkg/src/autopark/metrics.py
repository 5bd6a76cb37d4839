"""Trajectory-similarity metrics and closed-loop episode aggregation.

Fourier descriptors use the unitary DFT convention F_k = (1/sqrt(N)) * sum_j
z_j exp(-2*pi*i*j*k/N) over N = 64 arc-length-resampled points, keeping the
first 10 coefficients (including the 0th); the reported value is the
Euclidean norm of the descriptor-vector difference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

RESAMPLE_POINTS = 64
N_DESCRIPTORS = 10


class DegenerateTrajectoryError(ValueError):
    """Raised when a trajectory has zero arc length."""


def l2_distance(pred, gt) -> float:
    """Mean Euclidean distance over paired indices (truncated to the shorter)."""
    a = np.atleast_2d(np.asarray(pred, dtype=float))
    b = np.atleast_2d(np.asarray(gt, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("l2_distance requires nonempty trajectories")
    n = min(len(a), len(b))
    return float(np.mean(np.linalg.norm(a[:n] - b[:n], axis=1)))


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance between two point sets."""
    pa = np.atleast_2d(np.asarray(a, dtype=float))
    pb = np.atleast_2d(np.asarray(b, dtype=float))
    if pa.size == 0 or pb.size == 0:
        raise ValueError("hausdorff requires nonempty point sets")
    dx = pa[:, None, 0] - pb[None, :, 0]
    dy = pa[:, None, 1] - pb[None, :, 1]
    d = np.sqrt(dx * dx + dy * dy)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def resample_by_arc_length(points, n: int = RESAMPLE_POINTS) -> np.ndarray:
    """Resample a polyline to n points uniform in arc length; returns complex z."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        raise DegenerateTrajectoryError("need at least two points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        raise DegenerateTrajectoryError("zero-length trajectory")
    keep = np.concatenate([[True], seg > 0])
    cum, pts = cum[keep], pts[keep]
    s = np.linspace(0.0, total, n)
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return x + 1j * y


def fourier_descriptors(points, n_coeff: int = N_DESCRIPTORS) -> np.ndarray:
    z = resample_by_arc_length(points)
    return np.fft.fft(z, norm="ortho")[:n_coeff]


def fourier_diff(a, b) -> float:
    """Euclidean distance between the two trajectories' descriptor vectors."""
    return float(np.linalg.norm(fourier_descriptors(a) - fourier_descriptors(b)))


OUTCOMES = ("success", "wrong_slot", "violation", "collision", "timeout")


@dataclass(frozen=True)
class EpisodeOutcome:
    """Minimal closed-loop episode record consumed by aggregate()."""

    outcome: str
    duration: float
    position_error: float | None = None  # meters, success/violation only
    orientation_error: float | None = None  # degrees, success/violation only
    scene: str = ""

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        has_err = self.position_error is not None and self.orientation_error is not None
        if self.outcome in ("success", "violation"):
            if not has_err:
                raise ValueError(f"{self.outcome} episodes must carry pose errors")
        elif has_err:
            raise ValueError(f"{self.outcome} episodes must not carry pose errors")


def episode_score(ep: EpisodeOutcome) -> float:
    """Per-episode score in [0, 100]; non-success scores zero."""
    if ep.outcome != "success":
        return 0.0
    return (
        100.0
        - 50.0 * min(ep.position_error / 1.0, 1.0)
        - 50.0 * min(ep.orientation_error / 10.0, 1.0)
    )


@dataclass
class ClosedLoopSummary:
    n_episodes: int
    psr: float  # percent
    nsr: float
    pvr: float
    collision_rate: float
    timeout_rate: float
    ape: float | None  # meters, averaged over successes
    aoe: float | None  # degrees, averaged over successes
    apt: float  # seconds, averaged over all episodes
    aps: float  # [0, 100]
    counts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_episodes": self.n_episodes,
            "psr": self.psr,
            "nsr": self.nsr,
            "pvr": self.pvr,
            "collision_rate": self.collision_rate,
            "timeout_rate": self.timeout_rate,
            "ape": self.ape,
            "aoe": self.aoe,
            "apt": self.apt,
            "aps": self.aps,
            "counts": dict(self.counts),
        }


@dataclass
class OpenLoopSummary:
    n_samples: int
    l2: float
    hausdorff: float
    fourier_diff: float | None
    n_empty_predictions: int = 0
    n_fourier_skipped: int = 0

    def as_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "l2": self.l2,
            "hausdorff": self.hausdorff,
            "fourier_diff": self.fourier_diff,
            "n_empty_predictions": self.n_empty_predictions,
            "n_fourier_skipped": self.n_fourier_skipped,
        }


def aggregate(episodes: list[EpisodeOutcome]) -> ClosedLoopSummary:
    """Closed-loop rates and averages over a batch of episodes."""
    if not episodes:
        raise ValueError("aggregate requires at least one episode")
    n = len(episodes)
    counts = {name: 0 for name in OUTCOMES}
    for ep in episodes:
        counts[ep.outcome] += 1
    successes = [ep for ep in episodes if ep.outcome == "success"]
    pct = 100.0 / n
    return ClosedLoopSummary(
        n_episodes=n,
        psr=counts["success"] * pct,
        nsr=counts["wrong_slot"] * pct,
        pvr=counts["violation"] * pct,
        collision_rate=counts["collision"] * pct,
        timeout_rate=counts["timeout"] * pct,
        ape=float(np.mean([ep.position_error for ep in successes])) if successes else None,
        aoe=float(np.mean([ep.orientation_error for ep in successes])) if successes else None,
        apt=float(np.mean([ep.duration for ep in episodes])),
        aps=float(np.mean([episode_score(ep) for ep in episodes])),
        counts=counts,
    )


def open_loop_summary(rows: list[dict]) -> OpenLoopSummary:
    """Average per-sample open-loop metric rows produced by the eval command.

    Rows with an empty prediction carry l2 = None and are excluded from the
    means; rows where either trajectory is degenerate carry fourier = None.
    """
    if not rows:
        raise ValueError("need at least one evaluated sample")
    l2s = [r["l2"] for r in rows if r["l2"] is not None]
    hds = [r["hausdorff"] for r in rows if r["hausdorff"] is not None]
    fds = [r["fourier"] for r in rows if r["fourier"] is not None]
    n_empty = sum(1 for r in rows if r["l2"] is None)
    if not l2s:
        raise ValueError("all predictions were empty; nothing to average")
    return OpenLoopSummary(
        n_samples=len(rows),
        l2=float(np.mean(l2s)),
        hausdorff=float(np.mean(hds)),
        fourier_diff=float(np.mean(fds)) if fds else None,
        n_empty_predictions=n_empty,
        n_fourier_skipped=len(rows) - n_empty - len(fds),
    )
