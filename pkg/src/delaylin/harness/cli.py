"""Command line front end: ``delaylin {simulate,certify,conjugate,verify,sweep} --config FILE``."""

import argparse
import logging
import sys

from ..errors import CertificateError, ConfigurationError, ConsistencyError, DomainError
from .commands import COMMANDS, EXIT_CONFIG, EXIT_FAIL, write_report
from .config import load_config

log = logging.getLogger("delaylin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delaylin", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML experiment file")
    parser.add_argument("--out", default="out", help="output directory (report.json, tables/*.csv)")
    parser.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    parser.add_argument("--samples", type=int, default=None, help="override experiment.samples")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigurationError("--seed must be nonnegative")
            overrides["seed"] = args.seed
        if args.samples is not None:
            if args.samples < 0:
                raise ConfigurationError("--samples must be nonnegative")
            overrides["samples"] = args.samples
        if overrides:
            cfg = cfg.replace("experiment", **overrides)
        report = COMMANDS[args.command](cfg)
    except ConfigurationError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (CertificateError, ConsistencyError, DomainError) as exc:
        log.error("hypothesis failure: %s", exc)
        return EXIT_FAIL
    path = write_report(report, args.out)
    for w in report.warnings:
        log.warning("warning: %s", w)
    for name, ok in report.verdicts.items():
        log.info("%-24s %s", name, "pass" if ok else "FAIL")
    log.info("report written to %s (exit %d)", path, report.exit_code)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
