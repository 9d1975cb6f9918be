"""Command line entry point: ``execlayer {run,sweep,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import (
    ARCHS,
    POLICIES,
    ConfigError,
    ScenarioSpec,
    default_grid,
    load_config,
    read_per_run,
    run_sweep,
    write_summary,
)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--reps", type=int, help="replications per scenario")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--horizon", type=float, help="simulation horizon")
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-trace", action="store_true", help="write per-run event traces")
    p.add_argument("--emit-divergence-log", action="store_true", help="write per-run divergence logs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="execlayer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single scenario")
    run.add_argument("--lag", default="medium", help="low|medium|high or 'low,high' bounds")
    run.add_argument("--arch", default="layer", choices=ARCHS)
    run.add_argument("--policy", default="edd", choices=POLICIES)
    _add_common(run)

    sweep = sub.add_parser("sweep", help="run the full lag x arch x policy grid")
    sweep.add_argument("--config", type=Path, help="YAML scenario file (default: full grid)")
    _add_common(sweep)

    report = sub.add_parser("report", help="re-aggregate an existing per_run.csv")
    report.add_argument("per_run", type=Path)
    report.add_argument("--out", type=Path, help="summary path (default: next to per_run.csv)")
    return parser


def _overrides(args) -> dict:
    kw = {}
    if args.reps is not None:
        kw["replications"] = args.reps
    if args.seed is not None:
        kw["base_seed"] = args.seed
    if args.horizon is not None:
        kw["horizon"] = args.horizon
    return kw


def _print_summary(summary: list[dict]):
    print(f"{'lag':<8}{'policy':<8}{'metric':<20}{'direct':>22}{'layer':>22}")
    for row in summary:
        cells = []
        for a in ARCHS:
            m = row[f"{a}_mean"]
            cells.append("" if m == "" else f"{m:.4g} ± {row[f'{a}_hw95']:.2g}")
        print(f"{row['lag']:<8}{row['policy']:<8}{row['metric']:<20}{cells[0]:>22}{cells[1]:>22}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            rows = read_per_run(args.per_run)
            out = args.out or args.per_run.with_name("summary.csv")
            _print_summary(write_summary(rows, out))
            return 0
        kw = _overrides(args)
        if args.command == "run":
            grid = [ScenarioSpec.make(args.lag, args.arch, args.policy, **kw)]
        elif args.config is not None:
            grid = [
                ScenarioSpec.make(s.lag_bounds, s.architecture, s.policy,
                                  kw.get("replications", s.replications),
                                  kw.get("base_seed", s.base_seed),
                                  **{**dict(s.overrides), **{k: v for k, v in kw.items() if k == "horizon"}})
                for s in load_config(args.config)
            ]
        else:
            grid = default_grid(**kw)
        output = run_sweep(grid, args.out_dir, workers=args.workers,
                           emit_divergence_log=args.emit_divergence_log, emit_trace=args.emit_trace)
        _print_summary(output.summary)
        print(f"wrote {len(output.rows)} runs to {args.out_dir}")
        return 0
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        print(f"execlayer: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
