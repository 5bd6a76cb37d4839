"""Command-line entry point: gen-data, train, eval, sim, report."""
from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import ConfigError, RunConfig, load_config
from .expert import PlanningFailure


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="autopark",
                                     description="surround-camera parking pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate expert demonstration episodes")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("train", help="train the planner on a dataset")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="open-loop metrics on held-out samples")
    p.add_argument("--checkpoint", required=True, help="checkpoint path prefix")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-samples", type=int)

    p = sub.add_parser("sim", help="closed-loop parking episodes")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--mode", choices=("model", "expert"), default="expert")
    p.add_argument("--checkpoint", help="required for --mode model")
    p.add_argument("--no-traces", action="store_true")

    p = sub.add_parser("report", help="tabulate sim summaries")
    p.add_argument("summaries", nargs="+", help="summary.json paths")

    args = parser.parse_args(argv)
    try:
        if args.command == "gen-data":
            from .harness import cmd_gen_data

            stats = cmd_gen_data(_load(args), args.out, n_episodes=args.episodes)
            print(f"kept {stats['kept']}/{stats['requested']} episodes, "
                  f"{stats['total_samples']} samples -> {args.out}")
        elif args.command == "train":
            from .harness import cmd_train

            info = cmd_train(_load(args), args.dataset, args.out)
            last = info["history"][-1]
            print(f"trained {last['epoch']} epochs; final train CE "
                  f"{last['train_ce']:.4f} -> {args.out}")
        elif args.command == "eval":
            from .harness import cmd_eval

            summary = cmd_eval(args.checkpoint, args.dataset, args.out,
                               max_samples=args.max_samples)
            fd = "-" if summary.fourier_diff is None else f"{summary.fourier_diff:.4f}"
            print(f"L2 {summary.l2:.4f} m | Hausdorff {summary.hausdorff:.4f} m "
                  f"| Fourier {fd} over {summary.n_samples} samples")
        elif args.command == "sim":
            from .harness import cmd_sim

            summary = cmd_sim(_load(args), args.out, args.episodes, mode=args.mode,
                              checkpoint_prefix=args.checkpoint,
                              write_traces=not args.no_traces)
            overall = summary["overall"]
            print(f"PSR {overall['psr']:.1f}% over {overall['n_episodes']} episodes "
                  f"-> {args.out}")
        elif args.command == "report":
            from .harness import cmd_report

            cmd_report(args.summaries, stream=sys.stdout)
    except (ConfigError, PlanningFailure, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
