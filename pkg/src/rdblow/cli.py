"""Command-line entry point: simulate | bounds | probability | validate."""

from __future__ import annotations

import argparse
import sys

from .config import load_config, override
from .errors import ConfigurationError
from .harness import run

_EXIT_CONFIG_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdblow",
        description="Pathwise blow-up laboratory for a stochastic non-local "
                    "reaction-diffusion equation driven by fractional Brownian motion.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, help_text in (
        ("simulate", "integrate the pathwise PDE over an ensemble and export traces"),
        ("bounds", "evaluate per-path stopping-time bounds and certificates"),
        ("probability", "confront analytic blow-up probabilities with Monte Carlo"),
        ("validate", "run the invariant and property suite"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="key = value config file")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes")
        sp.add_argument("--strict", action="store_true",
                        help="exit non-zero on any falsification finding")
        sp.add_argument("--seed-override", type=int, default=None,
                        help="replace the config master seed")
        sp.add_argument("--horizon", type=float, default=None,
                        help="replace the config time horizon t_max")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return _EXIT_CONFIG_ERROR
    except ConfigurationError as exc:
        print("error: invalid configuration", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return _EXIT_CONFIG_ERROR

    overrides = {"experiment": args.experiment}
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.seed_override is not None:
        overrides["master_seed"] = args.seed_override
    if args.horizon is not None:
        from .fbm import TimeGrid
        dt = cfg.grid.dt
        overrides["grid"] = TimeGrid(args.horizon, max(1, round(args.horizon / dt)))
    cfg = override(cfg, **overrides)

    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"experiment = {cfg.experiment}")
    for key, val in cfg.raw:
        if not key.startswith("override:"):
            print(f"  {key} = {val}")

    result = run(cfg, strict=args.strict)
    if cfg.experiment == "validate":
        width = max(len(name) for name, _, _ in result.table)
        for name, ok, detail in result.table:
            print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    for f in result.findings:
        print(f"finding [{f.category}]: {f.message}")
    for a in result.artifacts:
        print(f"wrote {a}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
