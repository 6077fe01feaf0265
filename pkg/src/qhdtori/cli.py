"""Command line entry point ``qhdtori``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments
from .config import load_config
from .hamiltonians import ResonanceError

log = logging.getLogger("qhdtori")

COMMANDS = {
    "simulate": "integrate the flow and record monitors",
    "lifespan": "exit times of ||z||_{H^s} through 2 epsilon",
    "drift": "drift of the modified energy against N_s",
    "divisors": "small divisor scans and measure estimate",
    "energy-check": "cancellation residuals of the modified energy",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qhdtori", description="Quantum hydrodynamics on anisotropic tori.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="TOML configuration file")
        sp.add_argument("--out", type=Path, help="output directory (default: <out_dir>/<command>)")
        sp.add_argument("--seed", type=int, help="single seed overriding the configured seeds")
        sp.add_argument("--threads", type=int, help="worker processes")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    seeds = None if args.seed is None else (args.seed,)
    try:
        cfg = load_config(args.config, seeds=seeds, threads=args.threads)
    except (OSError, ValueError) as err:
        print(f"qhdtori: configuration error: {err}", file=sys.stderr)
        return 2
    out = args.out or Path(cfg.out_dir) / args.command
    log.info("running %s into %s", args.command, out)
    try:
        if args.command == "simulate":
            res = experiments.simulate(cfg, out)["results"]
        elif args.command == "lifespan":
            r = experiments.run_lifespan(cfg, out)
            res = {"exit_time": r.exit_times, "censored": r.censored, "slope": r.slope}
        elif args.command == "drift":
            res = experiments.run_drift(cfg, out)
        elif args.command == "divisors":
            res = experiments.run_divisors(cfg, out)
            res = {k: v for k, v in res.items() if k != "fits"}
        else:
            res = experiments.energy_check(cfg, out)
    except ResonanceError as err:
        print(f"qhdtori: resonance: {err}", file=sys.stderr)
        return 3
    print(json.dumps(experiments._jsonable(res), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
