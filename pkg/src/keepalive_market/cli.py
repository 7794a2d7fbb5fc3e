"""Command-line entry point: ``keepalive-market {simulate,trace,frontier,validate}``.

Exit status is 0 on success, 1 when a validation check fails and 2 on
configuration or I/O errors.
"""

import argparse
import logging
import sys

from .experiments import (
    OUT_ENV,
    ConfigError,
    ExperimentConfig,
    cmd_frontier,
    cmd_simulate,
    cmd_trace,
    default_out_dir,
)
from .trace import TraceFormatError

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _load_config(args):
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    data = config.to_dict()
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "offset", False):
        data["offset"] = True
    return ExperimentConfig.from_dict(data)


def _out_dir(args):
    return args.out if args.out else default_out_dir()


def build_parser():
    parser = argparse.ArgumentParser(
        prog="keepalive-market",
        description="Market-based keep-alive caching experiments.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, offset=True, jobs=True):
        p.add_argument("--config", help="JSON experiment config (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
        if offset:
            p.add_argument("--offset", action="store_true", help="report offset-adjusted payments")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="worker processes")

    common(sub.add_parser("simulate", help="batch of synthetic runs"))
    common(sub.add_parser("trace", help="evaluate trace applications"))
    fr = sub.add_parser("frontier", help="trade-off points for one run or application")
    common(fr, jobs=False)
    fr.add_argument("--run", type=int, default=0, help="run index for synthetic processes")
    fr.add_argument("--app", help="application id for trace configs")
    sub.add_parser("validate", help="run the built-in oracle and invariant checks")
    return parser


def _validate():
    from .checks import run_all

    results = run_all()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<28} {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "validate":
        return _validate()
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("jobs: must be >= 1")
        config = _load_config(args)
        out = _out_dir(args)
        if args.command == "simulate":
            paths = cmd_simulate(config, out, jobs=args.jobs)
        elif args.command == "trace":
            paths = cmd_trace(config, out, jobs=args.jobs)
            print(f"applications evaluated: {paths.pop('n_apps')}")
        else:
            paths = cmd_frontier(config, out, run=args.run, app=args.app)
            print(f"max |myerson - externality| total payment: {paths.pop('max_payment_gap'):.6g}")
    except (ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        name = f" {exc.filename}" if exc.filename else ""
        print(f"error:{name} {exc.strerror or exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
