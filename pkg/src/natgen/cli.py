"""Command-line entry point: ``natgen run | list | verify``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment, verify_report
from .io import load_config


def _parse_overrides(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise SystemExit(f"--override expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def cmd_list(args) -> int:
    for name, exp in EXPERIMENTS.items():
        print(f"{name:<14} {exp.description}")
        if args.verbose:
            for key, value in exp.defaults.items():
                print(f"    {key} = {value}")
    return 0


def cmd_run(args) -> int:
    values = load_config(args.config) if args.config else {}
    values.update(_parse_overrides(args.override))
    seed = args.seed if args.seed is not None else values.pop("seed", None)
    values.pop("seed", None)
    out = args.out if args.out is not None else values.pop("out", None)
    values.pop("out", None)
    values.pop("experiment", None)
    if seed is None:
        raise SystemExit("a seed is required (--seed or 'seed = N' in the config file)")
    if out is None:
        raise SystemExit("an output directory is required (--out or 'out = DIR' in the config file)")
    cfg = ExperimentConfig(args.experiment, int(seed), Path(out), values)
    report = run_experiment(cfg)
    sys.stdout.write(report.render())
    if not report.passed:
        print("FAILURES " + json.dumps(report.failures()), file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    ok, problems = verify_report(args.report_dir)
    if ok:
        print(f"{args.report_dir}: metrics reproduced from CSVs")
        return 0
    for p in problems:
        print(p, file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="natgen", description="generative evolutionary computation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write CSV, SVG and report.txt")
    run.add_argument("experiment", choices=sorted(EXPERIMENTS))
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--config", help="flat 'key = value' file; flags take precedence")
    run.add_argument("--override", action="append", metavar="KEY=VALUE", help="set one experiment parameter")
    run.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="show the experiment registry")
    ls.add_argument("-v", "--verbose", action="store_true", help="also print default parameters")
    ls.set_defaults(func=cmd_list)

    ver = sub.add_parser("verify", help="recompute a report's metrics from its CSV files")
    ver.add_argument("report_dir")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"natgen: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
