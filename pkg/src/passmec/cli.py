"""Command line entry point: ``python -m passmec {train,evaluate,sweep,defaults}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .env import VARIANTS
from .ppo import CheckpointError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="passmec", description="PASS-assisted MEC simulator and PPO trainer")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON config; missing keys take the defaults")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
        sp.add_argument("--episodes", type=int)
        sp.add_argument("--variant", choices=VARIANTS, help="run a single variant")
        sp.add_argument("--out", type=Path)

    common(sub.add_parser("train", help="train agents, write per-episode CSVs and checkpoints"))
    sw = sub.add_parser("sweep", help="train + evaluate over a UE-count or power grid")
    common(sw)
    sw.add_argument("--sweep", choices=("ues", "power"), required=True)
    ev = sub.add_parser("evaluate", help="evaluate a checkpoint with the policy mean")
    common(ev)
    ev.add_argument("--checkpoint", type=Path, required=True)
    sub.add_parser("defaults", help="print the default config as JSON")
    return p


def _spec(args, cfg: dict, sweep: str = "none") -> ex.ExperimentSpec:
    return ex.ExperimentSpec.from_config(
        cfg,
        episodes=args.episodes,
        seeds=[args.seed] if args.seed is not None else None,
        variants=[args.variant] if args.variant else None,
        out=args.out,
        sweep=sweep,
    )


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.cmd == "defaults":
        print(json.dumps(ex.default_config(), indent=2))
        return 0
    try:
        cfg = ex.load_config(args.config)
        if args.cmd == "train":
            for path in ex.run_training(_spec(args, cfg)):
                print(path)
        elif args.cmd == "sweep":
            print(ex.run_sweep(_spec(args, cfg, sweep=args.sweep)))
        else:
            spec = _spec(args, cfg)
            episodes = args.episodes if args.episodes is not None else spec.eval_episodes
            res = ex.evaluate(args.checkpoint, cfg["env"], args.variant, episodes, seed=spec.seeds[0])
            out = spec.out / f"eval_{args.checkpoint.stem}.csv"
            ex.write_eval_csv(out, res["variant"], spec.seeds[0], res, episodes)
            print(out)
            print(json.dumps(res))
    except (ex.ConfigError, CheckpointError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
