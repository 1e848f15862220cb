"""Command-line entry point: ``drifttrack {mean,tradeoff,ihp,kalman}``."""

import argparse
import json
import logging
import sys
from dataclasses import replace

from .config import ExperimentConfig, load_config, validate
from .errors import ConfigError, DriftTrackError
from .runner import emit_results, render, run_experiment

log = logging.getLogger("drifttrack")

COMMANDS = ("mean", "tradeoff", "ihp", "kalman")


def build_parser():
    parser = argparse.ArgumentParser(prog="drifttrack", description="Sample-size selection for tracking drifting minimizers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat TOML config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output path; the summary goes to <out>.summary.json")
        p.add_argument("--reps", type=int, help="override the replication count")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--workers", type=int, default=None, help="processes for replications")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig(experiment=args.command)
    if cfg.experiment != args.command:
        raise ConfigError(f"config is for '{cfg.experiment}' but the '{args.command}' command was given",
                          field="experiment")
    over = {}
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", field="seed")
        over["seed"] = args.seed
    if args.reps is not None:
        over["reps"] = args.reps
    return validate(replace(cfg, **over)) if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        log.info("running %s with config hash %s", cfg.experiment, cfg.digest())
        table = run_experiment(cfg, workers=args.workers)
        if args.out:
            emit_results(table, args.out, cfg, args.format)
        else:
            sys.stdout.write(render(table, args.format))
        print(json.dumps(table.summary, default=float), file=sys.stderr)
    except DriftTrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
