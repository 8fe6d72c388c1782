"""Command line entry point: ``relight run|sweep|presets``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConfigurationError, FlowParseError
from .flows import PRESET_NAMES, preset
from .harness import ExperimentConfig, metrics_csv, run_experiment, run_sweep


def _load(args):
    config = ExperimentConfig.load(args.config)
    if args.scale is not None:
        config = replace(config, scale=args.scale)
    return config


def cmd_run(args):
    config = _load(args)
    out = args.out or config.output or "out"
    records = run_experiment(config, out_dir=out, n_jobs=args.jobs)
    sys.stdout.write(metrics_csv(records))
    return 0


def cmd_sweep(args):
    config = _load(args)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"--values must be comma-separated integers, got {args.values!r}") from None
    out = args.out or config.output or "out"
    result = run_sweep(args.param, values, config, out_dir=out, n_jobs=args.jobs)
    print(f"value,avg_queue_length,avg_delay,avg_travel_time  ({args.param})")
    for value, m in result.summary().items():
        print(f"{value},{m['avg_queue_length']:.4f},{m['avg_delay']:.4f},{m['avg_travel_time']:.4f}")
    return 0


def cmd_presets(args):
    for name in PRESET_NAMES:
        spec = preset(name)
        print(f"{name}: horizon {spec.end:g} s")
        for iv in spec.intervals:
            print(f"  [{iv.begin:g}, {iv.end:g}) {iv.group} {iv.mode} {iv.rate:.6g} cars/s")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="relight", description="Ensemble double-DQN traffic signal experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment over its seeds")
    run.add_argument("--config", required=True)
    run.add_argument("--scale", type=float, default=None, help="horizon scale for synthetic presets")
    run.add_argument("--out", default=None)
    run.add_argument("--jobs", type=int, default=1)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="vary one RELight parameter")
    sweep.add_argument("--param", required=True, choices=["utd", "n", "m"])
    sweep.add_argument("--values", required=True)
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--scale", type=float, default=None)
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    presets = sub.add_parser("presets", help="list the shipped flow presets")
    presets.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FlowParseError, FileNotFoundError) as exc:
        print(f"relight: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
