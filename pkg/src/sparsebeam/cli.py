"""Command-line entry point.

    sparsebeam solve        --config run.ini --out results/
    sparsebeam sweep        --config run.ini --out results/ [--jobs N]
    sparsebeam locking      --config run.ini --out results/ [--jobs N]
    sparsebeam convergence  --config run.ini --out results/ [--jobs N]

Exit codes: 0 success, 1 configuration error, 2 solver non-convergence.
The --seed flag is recorded in output provenance; current studies are fully
deterministic, so it changes nothing but the header.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import (
    CONVERGENCE_COLUMNS,
    LOCKING_COLUMNS,
    provenance_lines,
    run_convergence,
    run_locking,
    run_solve,
    run_sweep,
    write_csv,
    write_rows_csv,
    write_sweep_csv,
)

__all__ = ["main"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsebeam",
        description="Sparse box-constrained optimal control of a static "
                    "Timoshenko beam (locking-free FEM + semismooth Newton).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "single solve; writes u/w/theta/p/q fields and a summary"),
        ("sweep", "warm-started solves over the [study] etas list"),
        ("locking", "error grid over (scheme, thickness, n)"),
        ("convergence", "errors and fitted rates against a fine reference"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for grid studies")
        p.add_argument("--seed", type=int, default=None, help="recorded in output provenance")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        out = Path(args.out)

        if args.command == "solve":
            res = run_solve(cfg, out)
            return 0 if res.converged else 2

        if args.command == "sweep":
            rows = run_sweep(cfg)
            write_sweep_csv(rows, out / "sweep.csv", cfg, args.seed)
            return 0 if all(r.converged for r in rows) else 2

        if args.command == "locking":
            rows = run_locking(cfg, jobs=args.jobs)
            write_rows_csv(rows, LOCKING_COLUMNS, out / "locking.csv", cfg, args.seed)
            return 0 if all(r["converged"] for r in rows) else 2

        rows, slopes = run_convergence(cfg, jobs=args.jobs)
        write_rows_csv(rows, CONVERGENCE_COLUMNS, out / "convergence.csv", cfg, args.seed)
        write_csv(
            out / "convergence_slopes.csv",
            ["quantity", "slope"],
            [[k, v] for k, v in sorted(slopes.items())],
            provenance_lines(cfg, args.seed),
        )
        return 0 if all(r["converged"] for r in rows) else 2
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
