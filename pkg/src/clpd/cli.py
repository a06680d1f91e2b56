"""Command-line entry point.

    bench run <config-file> [--out DIR] [--no-plot] [--jobs N]
    bench validate <config-file>
    bench rate <trace.csv> --column f_gap [--burn-in 0.3]

Exit codes: 0 success, 1 config error, 2 solver error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import parse_config, run_experiment
from .errors import ClpdError, ConfigError, InsufficientDataError
from .metrics import fit_rate
from .trace import read_trace_csv


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench", description="closed-loop primal-dual benchmark harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--no-plot", action="store_true", help="skip convergence.svg")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel solver runs")

    p_val = sub.add_parser("validate", help="validate a config without running")
    p_val.add_argument("config")

    p_rate = sub.add_parser("rate", help="fit a power law to a trace column")
    p_rate.add_argument("trace")
    p_rate.add_argument("--column", default="f_gap")
    p_rate.add_argument("--burn-in", type=float, default=0.3)
    return parser


def _read_text(path: str):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "validate":
        text = _read_text(args.config)
        if text is None:
            return 3
        try:
            parse_config(text)
        except ConfigError as exc:
            for err in exc.errors:
                print(f"config error: {err}", file=sys.stderr)
            return 1
        print("config ok")
        return 0

    if args.command == "run":
        text = _read_text(args.config)
        if text is None:
            return 3
        try:
            config = parse_config(text)
        except ConfigError as exc:
            for err in exc.errors:
                print(f"config error: {err}", file=sys.stderr)
            return 1
        try:
            result = run_experiment(
                config,
                out_dir=args.out,
                plot=False if args.no_plot else None,
                jobs=args.jobs,
            )
        except OSError as exc:
            print(f"i/o error: {exc}", file=sys.stderr)
            return 3
        except ClpdError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for name, exc in result.errors.items():
            print(f"solver error [{name}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        print(f"artifacts written to {result.out_dir}")
        return 0 if result.ok else 2

    # rate
    try:
        header, columns, index = read_trace_csv(args.trace)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except ClpdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if args.column not in columns:
        print(f"error: no column {args.column!r} in {args.trace}", file=sys.stderr)
        return 1
    try:
        report = fit_rate(
            columns[args.column],
            burn_in=args.burn_in,
            index=columns[index],
            tag=args.column,
        )
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    shape = "exponential-like" if report.exponential_suspected else "power-law"
    print(
        f"{args.column}: slope {report.slope:+.6f} intercept {report.intercept:+.6f} "
        f"r2 {report.r_squared:.6f} window [{report.window[0]:g}, {report.window[1]:g}] "
        f"({shape}; alt r2 {report.r_squared_exponential:.6f})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
