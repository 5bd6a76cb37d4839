import math

import numpy as np
import pytest

from autopark.geometry import Pose2, point_in_polygon
from autopark.world import (
    BoxObstacle,
    FREESPACE,
    GarageWorld,
    SLOT_LINE,
    SlotSpec,
    VehicleParams,
    load_world,
    make_parking_world,
    save_world,
    world_from_dict,
    world_to_dict,
)


class TestVehicleParams:
    def test_defaults_valid(self):
        p = VehicleParams()
        assert p.min_turn_radius == pytest.approx(p.wheelbase / math.tan(p.max_steer))

    @pytest.mark.parametrize("bad", [
        dict(wheelbase=-1.0),
        dict(max_steer=math.pi / 2),
        dict(rear_overhang=5.0, length=4.0),
    ])
    def test_invalid_rejected(self, bad):
        with pytest.raises(ValueError):
            VehicleParams(**bad)


class TestSlotSpec:
    def test_clockwise_corners_rejected(self):
        corners = np.array([[0, 0], [0, 5], [2.5, 5], [2.5, 0]])
        with pytest.raises(ValueError):
            SlotSpec(corners=corners, entry_edge=2, target_pose=Pose2(1.25, 1.5, math.pi / 2))

    def test_target_outside_rejected(self):
        corners = np.array([[0, 0], [2.5, 0], [2.5, 5], [0, 5]])
        with pytest.raises(ValueError):
            SlotSpec(corners=corners, entry_edge=2, target_pose=Pose2(9.0, 1.5, 0.0))


class TestGarageWorld:
    def test_partial_slot_blockage_rejected(self):
        corners = np.array([[0, 0], [2.5, 0], [2.5, 5], [0, 5]])
        slot = SlotSpec(corners=corners, entry_edge=2, target_pose=Pose2(1.25, 1.5, math.pi / 2))
        with pytest.raises(ValueError):
            GarageWorld(
                ground_labels=np.zeros((10, 10), dtype=np.uint8),
                origin=np.array([-2.0, -2.0]),
                resolution=1.0,
                obstacles=[BoxObstacle(x_min=2.0, x_max=4.0, y_min=1.0, y_max=3.0)],
                slots=[slot],
            )

    def test_contained_parked_vehicle_allowed(self):
        corners = np.array([[0, 0], [2.5, 0], [2.5, 5], [0, 5]])
        slot = SlotSpec(corners=corners, entry_edge=2, target_pose=Pose2(1.25, 1.5, math.pi / 2))
        world = GarageWorld(
            ground_labels=np.zeros((10, 10), dtype=np.uint8),
            origin=np.array([-2.0, -2.0]),
            resolution=1.0,
            obstacles=[BoxObstacle(x_min=0.3, x_max=2.2, y_min=0.3, y_max=4.7)],
            slots=[slot],
        )
        assert len(world.obstacles) == 1

    def test_label_sampling_outside_map(self):
        world = GarageWorld(
            ground_labels=np.full((4, 4), SLOT_LINE, dtype=np.uint8),
            origin=np.array([0.0, 0.0]), resolution=0.5,
        )
        assert world.label_at(1.0, 1.0) == SLOT_LINE
        assert world.label_at(-5.0, 1.0) == FREESPACE


class TestMakeParkingWorld:
    @pytest.mark.parametrize("scene", ["A", "B", "C"])
    def test_scene_construction(self, scene, vehicle):
        rng = np.random.default_rng(7)
        world, idx = make_parking_world(scene, vehicle, rng)
        assert 0 <= idx < len(world.slots)
        slot = world.slots[idx]
        assert point_in_polygon(slot.target_pose.xy, slot.corners)
        expected_obstacles = {"A": 0, "B": 1, "C": 2}[scene]
        assert len(world.obstacles) == expected_obstacles
        assert (world.ground_labels == SLOT_LINE).sum() > 0

    def test_unknown_scene(self, vehicle):
        with pytest.raises(ValueError):
            make_parking_world("Z", vehicle, np.random.default_rng(0))


class TestWorldSerialization:
    def test_round_trip(self, vehicle, tmp_path):
        world, _ = make_parking_world("C", vehicle, np.random.default_rng(3))
        path = tmp_path / "world.json"
        save_world(world, path)
        back = load_world(path)
        assert np.array_equal(back.ground_labels, world.ground_labels)
        assert back.resolution == world.resolution
        assert np.allclose(back.origin, world.origin)
        assert len(back.slots) == len(world.slots)
        for a, b in zip(back.slots, world.slots):
            assert np.allclose(a.corners, b.corners)
            assert a.target_pose == b.target_pose
        assert len(back.obstacles) == len(world.obstacles)

    def test_schema_version_checked(self, vehicle):
        world, _ = make_parking_world("A", vehicle, np.random.default_rng(3))
        data = world_to_dict(world)
        data["schema_version"] = 99
        with pytest.raises(ValueError):
            world_from_dict(data)

    def test_serialization_deterministic(self, vehicle, tmp_path):
        world, _ = make_parking_world("B", vehicle, np.random.default_rng(5))
        p1, p2 = tmp_path / "w1.json", tmp_path / "w2.json"
        save_world(world, p1)
        save_world(world, p2)
        assert p1.read_bytes() == p2.read_bytes()
