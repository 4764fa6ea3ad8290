"""Command line front end: ``simcovert run | sweep | check``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .ao import ALGORITHMS, build_scenario, run_algorithm
from .channel import dump_scenario
from .config import DESK_SEEDS, PROFILES, ConfigError, load_config, profile_config
from .harness import SweepSpec, parse_seeds, parse_values, run_sweep


def _base_config(args):
    if args.config:
        return load_config(args.config)
    return profile_config(args.profile)


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    scenario, rng = build_scenario(cfg, args.seed)
    rec = run_algorithm(args.algo, scenario, rng, args.codebook_size)
    summary = {"algorithm": rec.algorithm, "seed": rec.seed, "sum_rate": rec.sum_rate,
               "feasible": rec.feasible, "iterations": rec.iterations,
               "seconds": round(rec.seconds, 3), "status": rec.status}
    print(json.dumps(summary))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stem = out / f"{args.algo}_seed{rec.seed}"
        rec.save(stem)
        if args.dump_channels:
            dump_scenario(out / f"scenario_seed{rec.seed}.bin", scenario.stack, scenario.channels, cfg)
    return 0 if rec.status == "ok" else 1


def _cmd_sweep(args) -> int:
    cfg = _base_config(args)
    seeds = parse_seeds(args.seeds) if args.seeds else list(range(DESK_SEEDS))
    spec = SweepSpec(base=cfg, param=args.param, values=parse_values(args.values),
                     algorithms=args.algo.split(","), seeds=seeds, out_dir=args.out,
                     workers=args.workers, codebook_size=args.codebook_size, tag=args.tag)
    rows, summary = run_sweep(spec)
    for row in summary:
        print(f"{row['param']}={row['value']} {row['algo']}: mean {row['mean']:.4f} "
              f"std {row['std']:.4f} n {row['n']} feasible {row['feasible_fraction']:.2f}")
    return 0 if all(not str(r["status"]).startswith("error") for r in rows) else 1


def _cmd_check(args) -> int:
    from .acceptance import CRITERIA, run_acceptance

    only = [int(c) for c in args.only.split(",")] if args.only else sorted(CRITERIA)
    results = run_acceptance(only)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simcovert",
                                     description="SIM-assisted near-field covert multi-user design")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file (overrides --profile)")
        p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
        p.add_argument("--out", help="output directory")
        p.add_argument("--codebook-size", type=int, default=100)

    run = sub.add_parser("run", help="solve one scenario")
    common(run)
    run.add_argument("--algo", choices=ALGORITHMS, default="sca")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--dump-channels", action="store_true",
                     help="also write the SIM and channel matrices to --out")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="sweep one config field over values and seeds")
    common(sweep)
    sweep.add_argument("--algo", default="sca", help="comma-separated subset of " + ",".join(ALGORITHMS))
    sweep.add_argument("--param", required=True)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("--seeds", help="e.g. 0-19 or 1,3,5 (default: desk seed count)")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--tag", help="file name prefix for CSV and plot data")
    sweep.set_defaults(func=_cmd_sweep)

    check = sub.add_parser("check", help="run the acceptance suite")
    check.add_argument("--only", help="comma-separated criterion numbers")
    check.set_defaults(func=_cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
