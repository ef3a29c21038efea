"""``cylperc <experiment> --config FILE [--seed N] [--out DIR] [--threads K]``"""
from __future__ import annotations

import argparse
import sys

from .harness import (EXPERIMENTS, ConfigError, ResourceLimitError, RunConfig, run_experiment,
                      seed_from_env)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"cylperc: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cylperc", description="Percolation experiments for Poisson cylinders.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="key=value config file")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (CYLPERC_SEED wins)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.seed = seed_from_env(cfg.seed)
        if args.out is not None:
            cfg.out_dir = args.out
        if args.threads is not None:
            cfg.threads = args.threads
        cfg.validate()
        recs = run_experiment(cfg, args.experiment)
    except ConfigError as e:
        print(f"cylperc: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimitError as e:
        print(f"cylperc: resource limit: {e} (partial results written)", file=sys.stderr)
        return EXIT_RESOURCE
    for r in recs:
        print(f"{r.experiment}\t{r.estimate:.6g}\t{r.stderr:.3g}\t{r.params}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
