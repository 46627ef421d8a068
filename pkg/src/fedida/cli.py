"""``fedida`` command line: run, tune-lambda, tune-gamma, variance-study, ablation, report.

Exit status is 0 on success, 2 for a bad config and 3 when a pipeline stage fails.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback

from . import experiment
from .experiment import Artifacts, ConfigError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

COMMANDS = {
    "run": experiment.cmd_run,
    "tune-lambda": experiment.cmd_tune_lambda,
    "tune-gamma": experiment.cmd_tune_gamma,
    "variance-study": experiment.cmd_variance_study,
    "ablation": experiment.cmd_ablation,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedida", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["report"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--output-dir", help=f"overrides the config and ${experiment.OUTPUT_ENV}")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name == "variance-study":
            p.add_argument("--replicates", type=int, help="bootstrap test sets (>= 10)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = experiment.load_config(args.config, args.seed)
        if args.command == "variance-study" and args.replicates is not None \
                and args.replicates < experiment.MIN_REPLICATES:
            raise ConfigError(f"variance study needs at least {experiment.MIN_REPLICATES} replicates")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    root = experiment.output_dir_for(cfg, args.output_dir)
    if args.command == "report":
        try:
            print(experiment.cmd_report(cfg, root), end="")
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        return EXIT_OK

    out = Artifacts(root, cfg, args.command)
    try:
        if args.command == "variance-study":
            experiment.cmd_variance_study(cfg, out, args.replicates)
        else:
            COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        out.finish("failed", f"config error: {exc}")
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to one exit code
        logging.getLogger("fedida").debug(traceback.format_exc())
        out.finish("failed", f"{type(exc).__name__}: {exc}")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out.finish()
    print(f"wrote {len(out.files)} artifacts to {root}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
