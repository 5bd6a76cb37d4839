"""Demonstration dataset on disk and in memory.

Layout: one tensor pack per episode (ep_00000.bin/.json) plus manifest.json
carrying the config echo, per-episode hashes, and coverage stats. Training
samples are materialized views: frame j of an episode yields (images, target
heatmap in frame j, token sequence of the future chunk).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bev import GridSpec, cell_center_grid
from .geometry import Pose2, points_in_convex_quad, to_ego
from .sensing import palette_array
from .world import SlotSpec

DATASET_SCHEMA_VERSION = 1


def sha256_file(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


@dataclass
class EpisodeRecord:
    scene: str
    image_ids: np.ndarray  # (N, R, H, W) uint8 palette ids
    poses: np.ndarray  # (N, 3) world-frame x, y, yaw
    tokens: np.ndarray  # (N, 2Q+2) uint16
    slot_corners: np.ndarray  # (4, 2)
    slot_target: np.ndarray  # (3,)
    entry_edge: int

    @property
    def n_frames(self) -> int:
        return len(self.poses)

    def slot(self) -> SlotSpec:
        return SlotSpec(
            corners=self.slot_corners,
            entry_edge=self.entry_edge,
            target_pose=Pose2(*self.slot_target),
        )


class LoadedDataset:
    """Episodes held in RAM with per-sample collation for training."""

    def __init__(self, episodes: list[EpisodeRecord], grid: GridSpec):
        self.episodes = episodes
        self.grid = grid
        self.index: list[tuple[int, int]] = [
            (e, j) for e, ep in enumerate(episodes) for j in range(ep.n_frames)
        ]
        self._palette = palette_array()
        self._cell_centers = cell_center_grid(grid)

    def __len__(self) -> int:
        return len(self.index)

    def episode_split(self, holdout_fraction: float) -> tuple[list[int], list[int]]:
        """Deterministic train/holdout sample-index split at episode granularity."""
        n_ep = len(self.episodes)
        n_hold = max(1, int(round(n_ep * holdout_fraction))) if holdout_fraction > 0 else 0
        hold_eps = set(range(n_ep - n_hold, n_ep))
        train, hold = [], []
        for i, (e, _) in enumerate(self.index):
            (hold if e in hold_eps else train).append(i)
        return train, hold

    def _heatmap(self, ep: EpisodeRecord, j: int) -> np.ndarray:
        quad = to_ego(Pose2(*ep.poses[j]), ep.slot_corners)
        mask = points_in_convex_quad(self._cell_centers, quad)
        return mask.astype(np.float32).reshape(1, self.grid.rows, self.grid.cols)

    def collate(self, sample_indices) -> dict:
        """Stack samples: images (B,R,3,H,W) float32, heatmaps, tokens (B,T)."""
        images, heatmaps, tokens = [], [], []
        for i in sample_indices:
            e, j = self.index[i]
            ep = self.episodes[e]
            rgb = self._palette[ep.image_ids[j]]  # (R, H, W, 3)
            images.append(rgb.transpose(0, 3, 1, 2))
            heatmaps.append(self._heatmap(ep, j))
            tokens.append(ep.tokens[j])
        return {
            "images": np.ascontiguousarray(np.stack(images), dtype=np.float32),
            "heatmaps": np.stack(heatmaps),
            "tokens": np.stack(tokens).astype(np.int64),
        }

    def sample_view(self, i: int) -> tuple[EpisodeRecord, int]:
        e, j = self.index[i]
        return self.episodes[e], j


def write_episode(dir_path, idx: int, tensors: dict, meta: dict) -> dict:
    """Write one episode pack; returns its manifest entry."""
    from . import tensorio

    stem = f"ep_{idx:05d}"
    prefix = Path(dir_path) / stem
    tensorio.save_tensors(prefix, tensors, meta)
    return {
        "file": stem,
        "scene": meta["scene"],
        "n_frames": meta["n_frames"],
        "seed": meta["seed"],
        "sha256": sha256_file(prefix.with_suffix(".bin")),
    }


def write_manifest(dir_path, config_echo: dict, seed: int, entries: list[dict],
                   stats: dict) -> None:
    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "config": config_echo,
        "seed": seed,
        "episodes": entries,
        "stats": stats,
    }
    with open(Path(dir_path) / "manifest.json", "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")


def read_manifest(dir_path) -> dict:
    with open(Path(dir_path) / "manifest.json") as f:
        manifest = json.load(f)
    if manifest.get("schema_version") != DATASET_SCHEMA_VERSION:
        raise ValueError(f"unsupported dataset schema {manifest.get('schema_version')}")
    return manifest


def load_dataset(dir_path, grid: GridSpec) -> tuple[LoadedDataset, dict]:
    """Read every episode pack listed in the manifest."""
    from . import tensorio

    manifest = read_manifest(dir_path)
    episodes = []
    for entry in manifest["episodes"]:
        tensors, meta = tensorio.load_tensors(Path(dir_path) / entry["file"])
        episodes.append(
            EpisodeRecord(
                scene=meta["scene"],
                image_ids=tensors["image_ids"],
                poses=tensors["poses"],
                tokens=tensors["tokens"],
                slot_corners=tensors["slot_corners"],
                slot_target=tensors["slot_target"],
                entry_edge=int(meta["entry_edge"]),
            )
        )
    return LoadedDataset(episodes, grid), manifest
