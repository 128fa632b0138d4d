"""Command-line front end for the artifact plotting tools."""

from __future__ import annotations

import argparse
import sys

from .artifacts import MODES, SchemaError
from .plots import PlotSpec, plot_residuals
from .summary import plot_summary


def _cmd_plot_residuals(args) -> int:
    modes = tuple(args.modes.split(",")) if args.modes else MODES
    spec = PlotSpec(run_dir=args.run_dir, modes=modes,
                    labels=tuple(args.labels.split(",")) if args.labels else (),
                    run_index=args.run,
                    threshold_overlay=not args.no_thresholds,
                    out_path=args.out)
    path = plot_residuals(spec)
    print(f"residual panels -> {path}")
    return 0


def _cmd_report(args) -> int:
    result = plot_summary(args.runs_dir, args.out, args.table)
    for w in result["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(f"report -> {result['markdown']}"
          + (f", table -> {result['table_image']}" if args.table else ""))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="report-plots",
        description="Figures and reports from estimation run artifacts")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("plot-residuals", help="residual-vs-time panels")
    pr.add_argument("run_dir")
    pr.add_argument("--modes", help="comma-separated subset of M1..M8")
    pr.add_argument("--labels", help="comma-separated estimator labels")
    pr.add_argument("--run", type=int, default=0)
    pr.add_argument("--no-thresholds", action="store_true")
    pr.add_argument("--out", default="residuals.svg")
    pr.set_defaults(func=_cmd_plot_residuals)

    rp = sub.add_parser("report", help="aggregate metrics into a report")
    rp.add_argument("runs_dir", nargs="+")
    rp.add_argument("--out", default="report.md")
    rp.add_argument("--table", help="optional summary table image path")
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
