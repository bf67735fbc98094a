"""Command-line entry point: ``twrqcd {run,ablate,multi,trace,sweep} --config PATH --out DIR``."""
import argparse
import json
import logging
import sys

from ..errors import ConfigError
from . import runner
from .config import ExperimentConfig, config_from_dict, load_config

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

COMMANDS = {
    "run": runner.run_experiment,
    "ablate": runner.run_ablation,
    "multi": runner.run_multi_change,
    "trace": runner.run_llr_trace,
    "sweep": runner.run_sweep,
}


def build_parser():
    p = argparse.ArgumentParser(prog="twrqcd", description="Seeded change-detection experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-trial progress")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        sp.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--workers", type=int, default=None, help="worker processes (default: available cores)")
        sp.add_argument("--no-plots", action="store_true", help="skip SVG charts")
    return p


def _config(args):
    if args.config:
        return load_config(args.config, seed=args.seed)
    cfg = ExperimentConfig()
    return config_from_dict(cfg.to_dict(), seed=args.seed) if args.seed is not None else cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        workers = args.workers if args.workers is not None else runner.default_workers()
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        plots = False if args.no_plots else None
        COMMANDS[args.command](cfg, args.out, workers=workers, plots=plots)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"results written to {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
