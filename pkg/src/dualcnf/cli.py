"""Command-line driver: scenario runs, threshold calibration, rule dumps and
the point-count/stability survey."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .fdii import InsufficientRuns
from .rules import RULE_KINDS, RuleConstructionError, make_rule, stability_factor
from .scenario import (
    ConfigError,
    benchmark_points,
    calibrate_scenario,
    format_float,
    load_scenario,
    run_scenario,
    write_csv,
)


def _cmd_run(args) -> int:
    sc = load_scenario(args.config, args.set or [])
    if args.runs is not None:
        sc.runs = args.runs
    if args.seed is not None:
        sc.seed = args.seed
    if args.out is not None:
        sc.out_dir = args.out
    result = run_scenario(sc, progress=not args.quiet, workers=args.workers)
    man = result["manifest"]
    print(f"scenario {man['scenario']}: {man['runs']} run(s), "
          f"{len(man['estimators'])} estimator(s), "
          f"artifacts under {result['base']}")
    if man["partial_failures"]:
        print(f"  {len(man['partial_failures'])} partial failure(s); "
              "see manifest.json")
    return 0


def _cmd_calibrate(args) -> int:
    sc = load_scenario(args.config, args.set or [])
    if args.runs is not None:
        sc.calibration_runs = args.runs
    if args.seed is not None:
        sc.seed = args.seed
    thresholds = calibrate_scenario(sc, progress=not args.quiet)
    out = args.out or os.path.join(sc.out_dir, sc.name, "thresholds.json")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    from .scenario import _thresholds_to_json
    with open(out, "w", encoding="utf-8") as fh:
        json.dump({"config_hash": sc.config_hash(),
                   "thresholds": {lbl: _thresholds_to_json(t)
                                  for lbl, t in thresholds.items()}},
                  fh, indent=2, sort_keys=True)
    for lbl, th in thresholds.items():
        print(f"{lbl}: r_max = "
              + " ".join(f"{v:.5f}" for v in th.r_max))
    print(f"thresholds written to {out}")
    return 0


def _cmd_dump_rule(args) -> int:
    rule = make_rule(args.kind, args.n)
    rows = [[float(w), *[float(c) for c in pt]]
            for w, pt in zip(rule.weights, rule.points)]
    header = ["w", *[f"x{i + 1}" for i in range(rule.n)]]
    if args.out:
        write_csv(args.out, header, rows)
        print(f"{rule.kind} n={rule.n}: {rule.size} points -> {args.out}")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(format_float(v) for v in row))
    return 0


def _cmd_bench(args) -> int:
    rows = benchmark_points(args.nmin, args.nmax, time_gte=not args.no_timing)
    header = f"{'kind':8s} {'n':>8s} {'points':>7s} {'SF':>7s} {'deg':>4s} {'ms/step':>9s}"
    print(header)
    print("-" * len(header))
    for r in rows:
        ms = r.get("ms_per_step")
        print(f"{r['kind']:8s} {str(r['n']):>8s} {r['points']:7d} "
              f"{r['stability_factor']:7.3f} {str(r.get('degree', '-')):>4s} "
              f"{ms if ms is not None else '-':>9}")
    if args.out:
        keys = ["kind", "n", "points", "stability_factor", "degree", "ms_per_step"]
        write_csv(args.out, keys,
                  [[r.get(k, "") if not isinstance(r.get(k), float)
                    else float(r.get(k)) for k in keys] for r in rows])
        print(f"table written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dualcnf",
        description="Hybrid-degree dual cubature estimation and engine "
                    "fault-diagnosis experiments")
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute a scenario file")
    runp.add_argument("config")
    runp.add_argument("--runs", type=int)
    runp.add_argument("--seed", type=int)
    runp.add_argument("--out")
    runp.add_argument("--workers", type=int, default=1)
    runp.add_argument("--set", action="append", metavar="KEY=VALUE")
    runp.add_argument("--quiet", action="store_true")
    runp.set_defaults(func=_cmd_run)

    calp = sub.add_parser("calibrate", help="healthy-run threshold calibration")
    calp.add_argument("config")
    calp.add_argument("--runs", type=int)
    calp.add_argument("--seed", type=int)
    calp.add_argument("--out")
    calp.add_argument("--set", action="append", metavar="KEY=VALUE")
    calp.add_argument("--quiet", action="store_true")
    calp.set_defaults(func=_cmd_calibrate)

    dump = sub.add_parser("dump-rule", help="write a point/weight set as CSV")
    dump.add_argument("kind", choices=list(RULE_KINDS)
                      + [k.replace("CNF-", "") for k in RULE_KINDS])
    dump.add_argument("n", type=int)
    dump.add_argument("--out")
    dump.set_defaults(func=_cmd_dump_rule)

    bench = sub.add_parser("bench-points",
                           help="node-count / stability-factor survey")
    bench.add_argument("--nmin", type=int, default=2)
    bench.add_argument("--nmax", type=int, default=8)
    bench.add_argument("--out")
    bench.add_argument("--no-timing", action="store_true")
    bench.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, RuleConstructionError, InsufficientRuns,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
