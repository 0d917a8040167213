"""
mctnas command line.
gen-bench → train → search, plus baseline / correlate / report for comparisons.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from commands import analysis, baseline, bench, search, train
from commands.common import CommandError
from config import APP_NAME, APP_VERSION, settings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description="Monte Carlo tree architecture sampling and search over tabular / synthetic oracles",
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in (bench, train, search, baseline, analysis):
        module.register(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except CommandError as e:
        print(f"{APP_NAME} {args.command}: error: {e.detail}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
