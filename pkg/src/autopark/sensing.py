"""Pinhole surround cameras and the flat-color synthetic renderer.

Every rendered pixel is exactly one entry of PALETTE: obstacles win over
ground by ray distance, rays that miss everything show sky. Rendering is a
pure function of (world, ego, rig).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2
from .world import FREESPACE, LANE_LINE, SLOT_LINE, GarageWorld
from . import tensorio

# class -> RGB in [0, 1]; float32 so rendered pixels match entries bit-exactly
PALETTE = {
    "sky": np.array([0.35, 0.55, 0.85], dtype=np.float32),
    "freespace": np.array([0.25, 0.25, 0.25], dtype=np.float32),
    "lane_line": np.array([0.90, 0.85, 0.20], dtype=np.float32),
    "slot_line": np.array([0.92, 0.92, 0.92], dtype=np.float32),
    "obstacle": np.array([0.60, 0.15, 0.15], dtype=np.float32),
}
# index order used for palette-id images: ground classes keep their label ids
PALETTE_ORDER = ["freespace", "lane_line", "slot_line", "obstacle", "sky"]
OBSTACLE_ID = 3
SKY_ID = 4
_GROUND_CLASS = {FREESPACE: 0, LANE_LINE: 1, SLOT_LINE: 2}


def palette_array() -> np.ndarray:
    return np.stack([PALETTE[name] for name in PALETTE_ORDER])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class CameraExtrinsics:
    """Mount pose in the ego frame; yaw about +z, then pitch about the camera's left axis."""

    x: float
    y: float
    z: float
    yaw: float
    pitch: float

    def __post_init__(self):
        if self.z <= 0:
            raise ValueError("camera must be mounted above the ground")
        if abs(self.pitch) >= math.pi / 2:
            raise ValueError("pitch magnitude must be below pi/2")


@dataclass(frozen=True)
class SurroundRig:
    cameras: tuple[tuple[CameraIntrinsics, CameraExtrinsics], ...]

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValueError("rig needs at least one camera")

    def __len__(self) -> int:
        return len(self.cameras)


def default_rig(
    n_cameras: int = 4,
    width: int = 64,
    height: int = 64,
    hfov_deg: float = 90.0,
    mount_height: float = 1.0,
    pitch: float = -0.35,
) -> SurroundRig:
    """Co-located cameras at yaw multiples of 2*pi/n covering the full surround."""
    fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    fy = fx
    intr = CameraIntrinsics(fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
                            width=width, height=height)
    cams = []
    for k in range(n_cameras):
        yaw = float(np.remainder(k * 2.0 * math.pi / n_cameras + math.pi, 2.0 * math.pi) - math.pi)
        cams.append((intr, CameraExtrinsics(x=0.0, y=0.0, z=mount_height, yaw=yaw, pitch=pitch)))
    return SurroundRig(cameras=tuple(cams))


def _camera_axes(yaw: float, pitch: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(forward, right, down) unit axes of the camera in its parent frame."""
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    forward = np.array([cp * cy, cp * sy, sp])
    right = np.array([sy, -cy, 0.0])
    down = np.array([sp * cy, sp * sy, -cp])
    return forward, right, down


def camera_pose_world(extr: CameraExtrinsics, ego: Pose2) -> tuple[np.ndarray, float]:
    """Camera center (3,) in the world frame and its world yaw."""
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    origin = np.array(
        [ego.x + extr.x * c - extr.y * s, ego.y + extr.x * s + extr.y * c, extr.z]
    )
    return origin, ego.yaw + extr.yaw


def pixel_ray(
    intr: CameraIntrinsics, extr: CameraExtrinsics, ego: Pose2, u: float, v: float
) -> tuple[np.ndarray, np.ndarray]:
    """World-frame ray (origin, unit direction) through pixel coordinate (u, v)."""
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise ValueError(f"pixel ({u}, {v}) outside image")
    origin, world_yaw = camera_pose_world(extr, ego)
    f, r, d = _camera_axes(world_yaw, extr.pitch)
    direction = f + ((u - intr.cx) / intr.fx) * r + ((v - intr.cy) / intr.fy) * d
    return origin, direction / np.linalg.norm(direction)


def camera_ray_grid(intr: CameraIntrinsics, extr: CameraExtrinsics, ego: Pose2,
                    us: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rays for pixel coordinate grids of equal shape."""
    origin, world_yaw = camera_pose_world(extr, ego)
    f, r, d = _camera_axes(world_yaw, extr.pitch)
    a = (np.asarray(us, dtype=float) - intr.cx) / intr.fx
    b = (np.asarray(vs, dtype=float) - intr.cy) / intr.fy
    dirs = f[None, :] + a.reshape(-1, 1) * r[None, :] + b.reshape(-1, 1) * d[None, :]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return origin, dirs.reshape(*np.shape(us), 3)


def _ray_class_ids(world: GarageWorld, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Palette id per ray: nearest obstacle hit, else ground sample, else sky."""
    flat = dirs.reshape(-1, 3)
    n = flat.shape[0]
    t_best = np.full(n, np.inf)
    ids = np.full(n, SKY_ID, dtype=np.uint8)

    dz = flat[:, 2]
    descending = dz < -1e-12
    t_ground = np.full(n, np.inf)
    t_ground[descending] = -origin[2] / dz[descending]
    if descending.any():
        gx = origin[0] + t_ground[descending] * flat[descending, 0]
        gy = origin[1] + t_ground[descending] * flat[descending, 1]
        labels = world.label_at(gx, gy)
        ids[descending] = np.vectorize(_GROUND_CLASS.get, otypes=[np.uint8])(labels)
        t_best[descending] = t_ground[descending]

    for box in world.obstacles:
        lo = np.array([box.x_min, box.y_min, 0.0])
        hi = np.array([box.x_max, box.y_max, box.height])
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / flat
            t0 = (lo[None, :] - origin[None, :]) * inv
            t1 = (hi[None, :] - origin[None, :]) * inv
        # rays parallel to a slab axis: inside -> (-inf, inf), outside -> miss
        parallel = np.abs(flat) < 1e-12
        inside = (origin[None, :] >= lo[None, :]) & (origin[None, :] <= hi[None, :])
        t0 = np.where(parallel, np.where(inside, -np.inf, np.inf), t0)
        t1 = np.where(parallel, np.where(inside, np.inf, -np.inf), t1)
        t_near = np.minimum(t0, t1).max(axis=1)
        t_far = np.maximum(t0, t1).min(axis=1)
        hit = (t_near <= t_far) & (t_far > 1e-9)
        t_hit = np.where(t_near > 0, t_near, 0.0)
        better = hit & (t_hit < t_best)
        t_best[better] = t_hit[better]
        ids[better] = OBSTACLE_ID
    return ids.reshape(dirs.shape[:-1])


def render_surround_ids(world: GarageWorld, ego: Pose2, rig: SurroundRig) -> list[np.ndarray]:
    """Palette-id images, (H, W) uint8 per camera."""
    out = []
    for intr, extr in rig.cameras:
        us, vs = np.meshgrid(np.arange(intr.width, dtype=float),
                             np.arange(intr.height, dtype=float))
        origin, dirs = camera_ray_grid(intr, extr, ego, us, vs)
        out.append(_ray_class_ids(world, origin, dirs))
    return out


def ids_to_rgb(ids: np.ndarray) -> np.ndarray:
    """Palette ids (H, W) -> RGB image (3, H, W) float32 in [0, 1]."""
    return palette_array()[ids].transpose(2, 0, 1).copy()


def render_surround(world: GarageWorld, ego: Pose2, rig: SurroundRig) -> list[np.ndarray]:
    """RGB images, (3, H, W) float32 per camera."""
    return [ids_to_rgb(ids) for ids in render_surround_ids(world, ego, rig)]


def save_images(path_prefix: str, images: list[np.ndarray]) -> None:
    """Persist RGB images as raw little-endian float32 with a JSON sidecar."""
    tensors = {f"image_{k}": np.asarray(img, dtype="<f4") for k, img in enumerate(images)}
    meta = {"palette": {name: [float(v) for v in PALETTE[name]] for name in PALETTE_ORDER},
            "layout": "CHW", "value_range": [0.0, 1.0]}
    tensorio.save_tensors(path_prefix, tensors, meta)


def load_images(path_prefix: str) -> list[np.ndarray]:
    tensors, _ = tensorio.load_tensors(path_prefix)
    return [tensors[name] for name in sorted(tensors, key=lambda n: int(n.split("_")[1]))]


def export_png(path: str, image: np.ndarray) -> None:
    """Optional PNG dump for eyeballing; requires Pillow."""
    from PIL import Image  # lazy: viz extra

    arr = (np.asarray(image).transpose(1, 2, 0) * 255).round().astype(np.uint8)
    Image.fromarray(arr).save(path)
