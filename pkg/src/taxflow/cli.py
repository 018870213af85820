"""Command line entry point.

    taxflow <experiment> [--config FILE] [--seed N] [--out DIR] [overrides]

Exit codes: 0 success, 1 invalid configuration, 2 a checked property was
violated, 3 any other runtime error.  ``TAXFLOW_OUT`` sets the output
directory when ``--out`` is not given.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, parse_config
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_RUNTIME = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taxflow", description="Capital-gains tax flow experiments")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", type=Path, help="TOML experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--fixture", help="named fixture, e.g. figure2")
    p.add_argument("--alpha", type=float, help="tax rate in (0, 1)")
    p.add_argument("--model", choices=("crr", "gbm", "jump"))
    p.add_argument("--g", dest="rule", choices=("linear", "power", "tabulated"), help="feedback rule")
    p.add_argument("--levels", type=int, help="refinement levels")
    p.add_argument("--batch", type=int, help="Monte Carlo paths")
    p.add_argument("--steps", type=int, help="grid steps per path")
    return p


def _overrides(args: argparse.Namespace) -> dict:
    out: dict = {}
    for key in ("seed", "alpha"):
        if getattr(args, key) is not None:
            out[key] = getattr(args, key)
    nested = {
        "market": {"model": args.model, "steps": args.steps},
        "strategy": {"fixture": args.fixture, "rule": args.rule},
        "batch": {"levels": args.levels, "paths": args.batch},
    }
    for section, values in nested.items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            out[section] = values
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, _overrides(args))
        if cfg.experiment is not None and cfg.experiment != args.experiment:
            raise ConfigError([f"config is for experiment {cfg.experiment!r}, not {args.experiment!r}"])
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(os.environ.get("TAXFLOW_OUT", cfg.out))
    try:
        report = run_experiment(cfg, args.experiment, out)
    except Exception as exc:  # surfaced with context, mapped to the runtime exit code
        print(f"error: {args.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for v in report.violations:
        print(f"violation: {v}", file=sys.stderr)
    print(f"{args.experiment}: wrote {len(report.files) + 1} files to {out}")
    return EXIT_VIOLATION if report.violations else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
