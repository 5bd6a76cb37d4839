import math

import numpy as np
import pytest

from autopark.geometry import Pose2
from autopark.sensing import (
    CameraExtrinsics,
    CameraIntrinsics,
    PALETTE,
    SurroundRig,
    default_rig,
    ids_to_rgb,
    load_images,
    palette_array,
    pixel_ray,
    render_surround,
    render_surround_ids,
    save_images,
)
from autopark.world import BoxObstacle, GarageWorld, make_parking_world


def flat_world(size=40.0, resolution=0.5, obstacles=()):
    n = int(size / resolution)
    return GarageWorld(
        ground_labels=np.zeros((n, n), dtype=np.uint8),
        origin=np.array([-size / 2, -size / 2]),
        resolution=resolution,
        obstacles=list(obstacles),
    )


INTR = CameraIntrinsics(fx=32.0, fy=32.0, cx=32.0, cy=32.0, width=64, height=64)


class TestPixelRay:
    def test_principal_pixel_is_forward(self):
        extr = CameraExtrinsics(x=0, y=0, z=1.2, yaw=0.4, pitch=0.0)
        origin, d = pixel_ray(INTR, extr, Pose2(), INTR.cx, INTR.cy)
        assert d == pytest.approx([math.cos(0.4), math.sin(0.4), 0.0])
        assert origin == pytest.approx([0.0, 0.0, 1.2])

    def test_ground_hit_one_meter_ahead(self):
        extr = CameraExtrinsics(x=0, y=0, z=1.0, yaw=0.0, pitch=-math.pi / 4)
        origin, d = pixel_ray(INTR, extr, Pose2(), INTR.cx, INTR.cy)
        t = -origin[2] / d[2]
        hit = origin + t * d
        assert hit == pytest.approx([1.0, 0.0, 0.0], abs=1e-12)

    def test_monotone_directions_across_row(self):
        extr = CameraExtrinsics(x=0, y=0, z=1.0, yaw=0.0, pitch=-0.3)
        azimuths = []
        for u in range(0, 64, 4):
            _, d = pixel_ray(INTR, extr, Pose2(), float(u), INTR.cy)
            azimuths.append(math.atan2(d[1], d[0]))
        assert all(a > b for a, b in zip(azimuths, azimuths[1:]))

    def test_mounted_origin_follows_ego(self):
        extr = CameraExtrinsics(x=1.0, y=0.5, z=1.0, yaw=0.0, pitch=-0.3)
        origin, _ = pixel_ray(INTR, extr, Pose2(2.0, 3.0, math.pi / 2), 10, 10)
        assert origin == pytest.approx([2.0 - 0.5, 3.0 + 1.0, 1.0])

    def test_out_of_image_rejected(self):
        extr = CameraExtrinsics(x=0, y=0, z=1.0, yaw=0.0, pitch=-0.3)
        with pytest.raises(ValueError):
            pixel_ray(INTR, extr, Pose2(), 64.0, 0.0)


class TestRenderer:
    def test_empty_world_downward_camera_is_freespace(self):
        rig = SurroundRig(cameras=(
            (INTR, CameraExtrinsics(x=0, y=0, z=1.0, yaw=0.0, pitch=-1.2)),
        ))
        img = render_surround(flat_world(), Pose2(), rig)[0]
        assert np.all(img == PALETTE["freespace"][:, None, None])

    def test_occlusion_against_per_pixel_oracle(self):
        intr = CameraIntrinsics(fx=4.0, fy=4.0, cx=4.0, cy=4.0, width=8, height=8)
        extr = CameraExtrinsics(x=0, y=0, z=1.0, yaw=0.0, pitch=-0.3)
        rig = SurroundRig(cameras=((intr, extr),))
        box = BoxObstacle(x_min=2.0, x_max=3.0, y_min=-0.8, y_max=0.8, height=1.5)
        world = flat_world(obstacles=[box])
        ids = render_surround_ids(world, Pose2(), rig)[0]
        # oracle: scalar ray cast per pixel
        for v in range(8):
            for u in range(8):
                origin, d = pixel_ray(intr, extr, Pose2(), float(u), float(v))
                t_ground = math.inf if d[2] >= 0 else -origin[2] / d[2]
                t_box = math.inf
                lo, hi = np.array([2.0, -0.8, 0.0]), np.array([3.0, 0.8, 1.5])
                with np.errstate(divide="ignore"):
                    t0 = (lo - origin) / d
                    t1 = (hi - origin) / d
                near = np.minimum(t0, t1).max()
                far = np.maximum(t0, t1).min()
                if near <= far and far > 0:
                    t_box = max(near, 0.0)
                if t_box < t_ground:
                    assert ids[v, u] == 3, (u, v)
                elif math.isfinite(t_ground):
                    assert ids[v, u] in (0, 1, 2), (u, v)
                else:
                    assert ids[v, u] == 4, (u, v)

    def test_deterministic(self, vehicle):
        world, _ = make_parking_world("B", vehicle, np.random.default_rng(0))
        rig = default_rig()
        a = render_surround(world, Pose2(4, 8, 0.3), rig)
        b = render_surround(world, Pose2(4, 8, 0.3), rig)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_every_pixel_is_a_palette_entry(self, vehicle):
        world, _ = make_parking_world("C", vehicle, np.random.default_rng(1))
        palette = palette_array()
        for img in render_surround(world, Pose2(5, 8, -0.5), default_rig()):
            pixels = img.transpose(1, 2, 0).reshape(-1, 3)
            match = (pixels[:, None, :] == palette[None, :, :]).all(axis=2)
            assert match.any(axis=1).all()

    def test_translation_consistency(self):
        """Shifting the ego and every world element together leaves images unchanged."""
        box = BoxObstacle(x_min=2.0, x_max=3.0, y_min=-1.0, y_max=1.0, height=1.2)
        world_a = flat_world(obstacles=[box])
        delta = np.array([2.0, -1.5])
        world_b = GarageWorld(
            ground_labels=world_a.ground_labels.copy(),
            origin=world_a.origin + delta,
            resolution=world_a.resolution,
            obstacles=[BoxObstacle(
                x_min=box.x_min + delta[0], x_max=box.x_max + delta[0],
                y_min=box.y_min + delta[1], y_max=box.y_max + delta[1],
                height=box.height,
            )],
        )
        rig = default_rig()
        imgs_a = render_surround_ids(world_a, Pose2(1.0, 0.5, 0.4), rig)
        imgs_b = render_surround_ids(world_b, Pose2(1.0 + delta[0], 0.5 + delta[1], 0.4), rig)
        for a, b in zip(imgs_a, imgs_b):
            assert np.array_equal(a, b)

    def test_rgb_value_range(self, vehicle):
        world, _ = make_parking_world("A", vehicle, np.random.default_rng(2))
        for img in render_surround(world, Pose2(4, 8, 0), default_rig()):
            assert img.min() >= 0.0 and img.max() <= 1.0
            assert img.dtype == np.float32


class TestImageIO:
    def test_round_trip(self, tmp_path, vehicle):
        world, _ = make_parking_world("A", vehicle, np.random.default_rng(4))
        images = render_surround(world, Pose2(4, 8, 1.0), default_rig())
        save_images(tmp_path / "frame", images)
        back = load_images(tmp_path / "frame")
        assert len(back) == len(images)
        for a, b in zip(images, back):
            assert np.array_equal(a, b)

    def test_ids_to_rgb_matches_palette(self):
        ids = np.array([[0, 4], [3, 2]], dtype=np.uint8)
        rgb = ids_to_rgb(ids)
        assert rgb.shape == (3, 2, 2)
        assert np.array_equal(rgb[:, 0, 0], PALETTE["freespace"])
        assert np.array_equal(rgb[:, 0, 1], PALETTE["sky"])
