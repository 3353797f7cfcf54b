"""Command-line entry point: ``nystrom3d {solve,converge,quadtest,hermite-compare}``."""

import argparse
import logging
import os
import sys

from .errors import ConfigError, NystromError
from .harness import emit_report, load_config, run_convergence, run_hermite_compare, run_quadtest, \
    run_solve

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

_COMMANDS = {
    "solve": run_solve,
    "converge": run_convergence,
    "quadtest": run_quadtest,
    "hermite-compare": run_hermite_compare,
}


def _parser():
    parser = argparse.ArgumentParser(
        prog="nystrom3d",
        description="High-order Nystrom solver for sound-soft scattering: experiments and reports.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    parser.add_argument("--output-dir", help="directory for the CSV and JSON reports")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def _write(report, config, command):
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, "%s-%s" % (config.output_prefix, command))
    paths = [emit_report(report, "csv", stem + ".csv"), emit_report(report, "json", stem + ".json")]
    return paths


def cli_main(argv=None):
    """Run one experiment; returns 0 on success, 1 on solver or oracle failure, 2 on bad input."""
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append("output_dir=%s" % args.output_dir)
    try:
        if args.config is not None and not os.path.isfile(args.config):
            raise ConfigError("configuration file %s not found" % args.config)
        config = load_config(args.config, overrides)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = _COMMANDS[args.command](config)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except NystromError as exc:
        partial = getattr(exc, "report", None)
        if partial is not None and partial.rows:
            for path in _write(partial, config, args.command + "-partial"):
                print("partial report: %s" % path, file=sys.stderr)
        print("%s failed: %s" % (args.command, exc), file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print("I/O error: %s" % exc, file=sys.stderr)
        return EXIT_FAILURE
    try:
        paths = _write(report, config, args.command)
    except OSError as exc:
        print("cannot write report: %s" % exc, file=sys.stderr)
        return EXIT_FAILURE
    sys.stdout.write(report.to_csv())
    for path in paths:
        print("wrote %s" % path)
    return EXIT_OK


def main():
    sys.exit(cli_main())
