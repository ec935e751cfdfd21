"""Command-line front end.

    volterra-lab <subcommand> --config CONFIG.json [--seed N] [--out DIR]
                              [--threads N]

Subcommands: check-conditions, simulate, solve, pe-ae-sweep, density-verify,
reproduce.  Exit codes: 0 success, 2 configuration/validation error,
3 numeric failure.  Reports are JSON with stable key ordering; identical
config and seed reproduce identical reports up to the timings block.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError, DomainError, InsufficientDataError, NumericError
from .experiments import run_experiment
from .io import dump_json

_SUBCOMMANDS = {
    "check-conditions": "check_conditions",
    "simulate": "simulate",
    "solve": "solve",
    "pe-ae-sweep": "pe_ae_sweep",
    "density-verify": "density_verify",
    "reproduce": None,  # experiment taken from the config file
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-lab",
        description="Simulation and verification lab for SDEs with additive "
                    "Gaussian Volterra noise.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output dir")
        p.add_argument("--threads", type=int, default=None,
                       help="override the worker count")
    return parser


def _load_config(args) -> ExperimentConfig:
    data = ExperimentConfig.from_file(args.config).raw
    expected = _SUBCOMMANDS[args.command]
    if expected is not None and data.get("experiment") != expected:
        data = dict(data)
        data["experiment"] = expected
    if args.seed is not None:
        data = dict(data)
        data["seed"] = args.seed
    if args.out is not None:
        data = dict(data)
        data["output_dir"] = args.out
    if args.threads is not None:
        data = dict(data)
        data["threads"] = args.threads
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        results = run_experiment(cfg, out_dir)
    except (ConfigError, DomainError, InsufficientDataError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    report = {
        "config": cfg.raw,
        "experiment": cfg.experiment,
        "results": results,
        "tool_version": __version__,
        "timings": {"wall_seconds": time.time() - started},
    }
    report_path = out_dir / "report.json"
    dump_json(report, report_path)
    print(report_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
