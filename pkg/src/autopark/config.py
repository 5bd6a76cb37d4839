"""Run configuration: one strict, schema-versioned JSON document drives every
command; unknown keys are rejected, and each artifact embeds a config echo.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .bev import DepthBins, GridSpec
from .control import ControllerConfig, RwfGains
from .model import ModelConfig, TrainHyperparams
from .sensing import SurroundRig, default_rig
from .simulator import SimConfig
from .tokenizer import TokenVocab
from .world import VehicleParams

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RigConfig:
    n_cameras: int = 4
    width: int = 64
    height: int = 64
    hfov_deg: float = 90.0
    mount_height: float = 1.0
    pitch: float = -0.35

    def build(self) -> SurroundRig:
        return default_rig(
            n_cameras=self.n_cameras, width=self.width, height=self.height,
            hfov_deg=self.hfov_deg, mount_height=self.mount_height, pitch=self.pitch,
        )


@dataclass(frozen=True)
class WorldConfig:
    n_slots: int = 6
    slot_width: float = 2.6
    slot_depth: float = 5.5
    aisle_width: float = 7.0
    map_resolution: float = 0.1
    line_thickness: float = 0.12

    def kwargs(self) -> dict:
        return {
            "n_slots": self.n_slots, "slot_width": self.slot_width,
            "slot_depth": self.slot_depth, "aisle_width": self.aisle_width,
            "map_resolution": self.map_resolution, "line_thickness": self.line_thickness,
        }


@dataclass(frozen=True)
class ModelSection:
    channels: int = 32
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    q_len: int = 30
    fusion_mode: str = "target_query"
    fusion_downsample: int = 4
    fusion_heads: int = 0
    mlp_ratio: int = 4


@dataclass(frozen=True)
class GridSection:
    half_x: float = 10.0
    half_y: float = 10.0
    resolution: float = 0.1

    def build(self) -> GridSpec:
        return GridSpec(half_x=self.half_x, half_y=self.half_y, resolution=self.resolution)


@dataclass(frozen=True)
class DepthSection:
    count: int = 24
    d_min: float = 0.5
    d_max: float = 12.5

    def build(self) -> DepthBins:
        return DepthBins(count=self.count, d_min=self.d_min, d_max=self.d_max)


@dataclass(frozen=True)
class VehicleSection:
    wheelbase: float = 2.7
    width: float = 1.9
    length: float = 4.4
    rear_overhang: float = 0.9
    max_steer: float = 0.6
    max_speed: float = 2.0

    def build(self) -> VehicleParams:
        return VehicleParams(**dataclasses.asdict(self))


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 4
    batch_size: int = 16
    learning_rate: float = 1e-3
    threads: int = 1
    holdout_fraction: float = 0.1

    def build(self) -> TrainHyperparams:
        return TrainHyperparams(
            epochs=self.epochs, batch_size=self.batch_size,
            learning_rate=self.learning_rate, threads=self.threads,
        )


@dataclass(frozen=True)
class ControlSection:
    k_theta: float = 1.0
    k_e: float = 0.5
    parking_speed: float = 0.7
    min_speed: float = 0.12
    taper_distance: float = 1.0
    leg_end_tolerance: float = 0.06
    replan_period: float = 3.0
    replan_cross_track: float = 0.5
    replan_hold_distance: float = 1.5
    steer_pid: tuple = (1.2, 0.5, 0.0)
    speed_pid: tuple = (0.8, 0.4, 0.0)

    def build(self) -> ControllerConfig:
        return ControllerConfig(
            gains=RwfGains(k_theta=self.k_theta, k_e=self.k_e),
            parking_speed=self.parking_speed,
            min_speed=self.min_speed,
            taper_distance=self.taper_distance,
            leg_end_tolerance=self.leg_end_tolerance,
            replan_period=self.replan_period,
            replan_cross_track=self.replan_cross_track,
            replan_hold_distance=self.replan_hold_distance,
            steer_pid=tuple(self.steer_pid),
            speed_pid=tuple(self.speed_pid),
        )


@dataclass(frozen=True)
class SimSection:
    dt: float = 0.05
    time_limit: float = 120.0
    steer_tau: float = 0.2
    speed_tau: float = 0.5

    def build(self) -> SimConfig:
        return SimConfig(dt=self.dt, time_limit=self.time_limit,
                         steer_tau=self.steer_tau, speed_tau=self.speed_tau)


@dataclass(frozen=True)
class DataSection:
    n_episodes: int = 32
    scene: str = "mixed"  # A | B | C | mixed
    waypoint_spacing: float = 0.5
    n_tokens: int = 1200


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    rig: RigConfig = field(default_factory=RigConfig)
    grid: GridSection = field(default_factory=GridSection)
    depth: DepthSection = field(default_factory=DepthSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    control: ControlSection = field(default_factory=ControlSection)
    sim: SimSection = field(default_factory=SimSection)
    data: DataSection = field(default_factory=DataSection)

    def vocab(self) -> TokenVocab:
        return TokenVocab(n_tokens=self.data.n_tokens)

    def model_config(self) -> ModelConfig:
        m = self.model
        return ModelConfig(
            channels=m.channels, d_model=m.d_model, n_heads=m.n_heads,
            n_layers=m.n_layers, q_len=m.q_len, fusion_mode=m.fusion_mode,
            fusion_downsample=m.fusion_downsample, fusion_heads=m.fusion_heads,
            mlp_ratio=m.mlp_ratio, img_height=self.rig.height, img_width=self.rig.width,
            grid=self.grid.build(), depth_bins=self.depth.build(), vocab=self.vocab(),
        )


def _from_dict(cls, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object at {path or 'root'}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config key(s) at {path or 'root'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _SECTION_TYPES
        ):
            sub_cls = f.type if dataclasses.is_dataclass(f.type) else _SECTION_TYPES[f.type]
            kwargs[name] = _from_dict(sub_cls, value, f"{path}{name}.")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config at {path or 'root'}: {exc}") from exc


_SECTION_TYPES = {
    cls.__name__: cls
    for cls in (
        WorldConfig, VehicleSection, RigConfig, GridSection, DepthSection,
        ModelSection, TrainSection, ControlSection, SimSection, DataSection,
    )
}


def config_from_dict(data: dict) -> RunConfig:
    cfg = _from_dict(RunConfig, data)
    if cfg.schema_version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema version {cfg.schema_version}")
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    def convert(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: convert(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, tuple):
            return list(obj)
        return obj

    return convert(cfg)


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)


def save_config_echo(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, sort_keys=True, indent=1)
        f.write("\n")


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True)
