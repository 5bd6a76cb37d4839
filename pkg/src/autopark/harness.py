"""Workflow commands: gen-data, train, eval, sim, report.

Every command writes a config echo next to its artifacts and derives all
randomness from the root seed through named substreams, so reruns with the
same config produce byte-identical outputs.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import metrics as mx
from . import model as mdl
from .config import RunConfig, config_to_dict, save_config_echo
from .expert import (
    PlanningFailure,
    episode_chunk_coverage,
    episode_to_tensors,
    generate_episode,
    scene_for_episode,
)
from .geometry import Pose2, to_ego
from .seeds import derive_int, substream
from .simulator import EpisodeResult, expert_policy, run_episode
from .world import make_parking_world
from .expert import sample_start_pose

SUMMARY_SCHEMA_VERSION = 1


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def cmd_gen_data(cfg: RunConfig, out_dir, n_episodes: int | None = None) -> dict:
    """Generate expert demonstration episodes into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_req = n_episodes if n_episodes is not None else cfg.data.n_episodes
    params = cfg.vehicle.build()
    rig = cfg.rig.build()
    vocab = cfg.vocab()
    grid = cfg.grid.build()

    entries = []
    scenes: dict[str, int] = {}
    failures = 0
    in_range = total_pts = 0
    kept = 0
    for i in range(n_req):
        rng = substream(cfg.seed, "episode", i)
        scene = scene_for_episode(cfg.data.scene, rng)
        try:
            episode = generate_episode(
                rng, scene, params, rig,
                spacing=cfg.data.waypoint_spacing,
                world_kwargs=cfg.world.kwargs(), seed=i,
            )
        except PlanningFailure:
            failures += 1
            continue
        tensors, meta = episode_to_tensors(episode, cfg.model.q_len, vocab,
                                           grid.half_x, grid.half_y)
        entries.append(ds.write_episode(out, kept, tensors, meta))
        cov_in, cov_total = episode_chunk_coverage(episode, cfg.model.q_len,
                                                   grid.half_x, grid.half_y)
        in_range += cov_in
        total_pts += cov_total
        scenes[scene] = scenes.get(scene, 0) + 1
        kept += 1
    if kept < 0.5 * n_req:
        raise PlanningFailure(
            f"only {kept}/{n_req} episodes planned successfully (need at least 50%)"
        )
    stats = {
        "requested": n_req,
        "kept": kept,
        "failures": failures,
        "total_samples": int(sum(e["n_frames"] for e in entries)),
        "chunk_in_range_fraction": (in_range / total_pts) if total_pts else 0.0,
        "scenes": scenes,
    }
    ds.write_manifest(out, config_to_dict(cfg), cfg.seed, entries, stats)
    save_config_echo(cfg, out / "config_echo.json")
    return stats


def build_model_from_config(cfg: RunConfig, seed: int | None = None) -> mdl.ParkingPlanner:
    return mdl.build_model(cfg.model_config(), cfg.rig.build(),
                           seed=cfg.seed if seed is None else seed)


def cmd_train(cfg: RunConfig, dataset_dir, out_dir) -> dict:
    """Train on a generated dataset; writes checkpoint + loss.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid.build()
    data, manifest = ds.load_dataset(dataset_dir, grid)
    train_idx, hold_idx = data.episode_split(cfg.train.holdout_fraction)
    model = build_model_from_config(cfg)
    history = mdl.train_model(
        model, data, train_idx, cfg.train.build(),
        seed=derive_int(cfg.seed, "train"), holdout_indices=hold_idx,
    )
    with open(out / "loss.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_ce", "holdout_ce"])
        for row in history:
            writer.writerow([
                row["epoch"],
                "" if row["train_ce"] is None else f"{row['train_ce']:.6f}",
                "" if row["holdout_ce"] is None else f"{row['holdout_ce']:.6f}",
            ])
    mdl.save_checkpoint(out / "checkpoint", model, config_to_dict(cfg), cfg.seed)
    save_config_echo(cfg, out / "config_echo.json")
    return {"history": history, "n_train": len(train_idx), "n_holdout": len(hold_idx)}


def load_model_from_checkpoint(path_prefix) -> tuple[mdl.ParkingPlanner, RunConfig]:
    from .config import config_from_dict

    tensors, meta = mdl.load_checkpoint_tensors(path_prefix)
    cfg = config_from_dict(meta["config"])
    model = mdl.ParkingPlanner(cfg.model_config(), cfg.rig.build())
    mdl.load_parameters(model, tensors)
    model.eval()
    return model, cfg


def _predict_for_sample(model, cfg: RunConfig, data: ds.LoadedDataset, idx: int):
    """(pred waypoints, ground-truth chunk) for one held-out sample."""
    from .sensing import palette_array
    from .tokenizer import deserialize_sequence

    ep, j = data.sample_view(idx)
    rgb = palette_array()[ep.image_ids[j]].transpose(0, 3, 1, 2)
    pose = Pose2(*ep.poses[j])
    pred, clean = mdl.infer_trajectory(rgb, ep.slot(), pose, model)
    vocab = cfg.vocab()
    grid = cfg.grid.build()
    gt, _ = deserialize_sequence(ep.tokens[j].tolist(), vocab, grid.half_x, grid.half_y)
    return pred, gt, clean


def cmd_eval(checkpoint_prefix, dataset_dir, out_dir,
             max_samples: int | None = None) -> mx.OpenLoopSummary:
    """Open-loop metrics of a checkpoint against held-out dataset samples."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, cfg = load_model_from_checkpoint(checkpoint_prefix)
    data, manifest = ds.load_dataset(dataset_dir, cfg.grid.build())
    if manifest["config"]["data"]["n_tokens"] != cfg.data.n_tokens:
        raise ValueError("checkpoint and dataset vocabularies disagree")
    _, hold_idx = data.episode_split(cfg.train.holdout_fraction)
    if not hold_idx:
        hold_idx = list(range(len(data)))
    if max_samples is not None:
        hold_idx = hold_idx[:max_samples]

    rows = []
    for idx in hold_idx:
        pred, gt, clean = _predict_for_sample(model, cfg, data, idx)
        row = {"sample": idx, "n_pred": len(pred), "clean": clean,
               "l2": None, "hausdorff": None, "fourier": None}
        if len(pred) > 0 and len(gt) > 0:
            row["l2"] = mx.l2_distance(pred, gt)
            row["hausdorff"] = mx.hausdorff(pred, gt)
            try:
                row["fourier"] = mx.fourier_diff(pred, gt)
            except mx.DegenerateTrajectoryError:
                pass
        rows.append(row)
    with open(out / "open_loop.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample", "n_pred", "clean", "l2", "hausdorff", "fourier"])
        for r in rows:
            writer.writerow([
                r["sample"], r["n_pred"], int(r["clean"]),
                *("" if r[k] is None else f"{r[k]:.6f}" for k in ("l2", "hausdorff", "fourier")),
            ])
    summary = mx.open_loop_summary(rows)
    _write_json(out / "open_loop_summary.json",
                {"schema_version": SUMMARY_SCHEMA_VERSION, **summary.as_dict()})
    return summary


def _episode_outcome(result: EpisodeResult, scene: str) -> mx.EpisodeOutcome:
    return mx.EpisodeOutcome(
        outcome=result.outcome,
        duration=result.duration,
        position_error=result.position_error,
        orientation_error=result.orientation_error,
        scene=scene,
    )


def cmd_sim(cfg: RunConfig, out_dir, n_episodes: int, mode: str = "expert",
            checkpoint_prefix=None, write_traces: bool = True) -> dict:
    """Closed-loop episodes with the expert passthrough or a trained model."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "model":
        if checkpoint_prefix is None:
            raise ValueError("model mode requires a checkpoint")
        model, model_cfg = load_model_from_checkpoint(checkpoint_prefix)
        rig = model_cfg.rig.build()
    elif mode != "expert":
        raise ValueError(f"unknown sim mode {mode!r}")

    params = cfg.vehicle.build()
    control_cfg = cfg.control.build()
    sim_cfg = cfg.sim.build()
    results: list[tuple[str, EpisodeResult]] = []
    traces_dir = out / "traces"
    if write_traces:
        traces_dir.mkdir(exist_ok=True)
    for i in range(n_episodes):
        rng = substream(cfg.seed, "sim-episode", i)
        scene = scene_for_episode(cfg.data.scene, rng)
        world, slot_idx = make_parking_world(scene, params, rng, **cfg.world.kwargs())
        slot = world.slots[slot_idx]
        try:
            start = sample_start_pose(rng, slot, world, params, cfg.world.slot_depth)
        except PlanningFailure:
            continue
        if mode == "expert":
            policy = expert_policy(world, slot, params, spacing=cfg.data.waypoint_spacing)
        else:
            from .sensing import render_surround

            def policy(pose, _world=world, _slot=slot):
                images = np.stack(render_surround(_world, pose, rig))
                points, _ = mdl.infer_trajectory(images, _slot, pose, model)
                return points

        result = run_episode(policy, world, slot, start, params, control_cfg, sim_cfg)
        results.append((scene, result))
        if write_traces:
            with open(traces_dir / f"ep_{i:04d}.csv", "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(EpisodeResult.TRACE_COLUMNS)
                for row in result.trace:
                    writer.writerow([f"{v:.6f}" for v in row])

    if not results:
        raise RuntimeError("no episodes were simulated")
    with open(out / "episodes.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["episode", "scene", "outcome", "duration",
                         "position_error", "orientation_error", "n_replans"])
        for i, (scene, r) in enumerate(results):
            writer.writerow([
                i, scene, r.outcome, f"{r.duration:.3f}",
                "" if r.position_error is None else f"{r.position_error:.4f}",
                "" if r.orientation_error is None else f"{r.orientation_error:.3f}",
                r.n_replans,
            ])

    summary: dict = {"schema_version": SUMMARY_SCHEMA_VERSION, "mode": mode, "per_scene": {}}
    all_outcomes = [_episode_outcome(r, scene) for scene, r in results]
    summary["overall"] = mx.aggregate(all_outcomes).as_dict()
    for scene in sorted({s for s, _ in results}):
        outcomes = [o for o in all_outcomes if o.scene == scene]
        summary["per_scene"][scene] = mx.aggregate(outcomes).as_dict()
    _write_json(out / "summary.json", summary)
    save_config_echo(cfg, out / "config_echo.json")
    return summary


def cmd_report(summary_paths: list, stream=None) -> str:
    """Render sim summaries as a fixed-width table (one row per scene)."""
    lines = [
        f"{'source':28s} {'scene':6s} {'PSR%':>6s} {'NSR%':>6s} {'PVR%':>6s} "
        f"{'APE m':>7s} {'AOE deg':>8s} {'APT s':>7s} {'APS':>6s}"
    ]
    for path in summary_paths:
        with open(path) as f:
            summary = json.load(f)
        groups = dict(summary.get("per_scene", {}))
        groups["all"] = summary["overall"]
        for scene, agg in groups.items():
            ape = "-" if agg["ape"] is None else f"{agg['ape']:.2f}"
            aoe = "-" if agg["aoe"] is None else f"{agg['aoe']:.1f}"
            lines.append(
                f"{Path(path).parent.name[:28]:28s} {scene:6s} {agg['psr']:6.1f} "
                f"{agg['nsr']:6.1f} {agg['pvr']:6.1f} {ape:>7s} {aoe:>8s} "
                f"{agg['apt']:7.1f} {agg['aps']:6.1f}"
            )
    text = "\n".join(lines)
    if stream is not None:
        print(text, file=stream)
    return text
