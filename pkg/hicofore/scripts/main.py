# Copyright (c) 2024, The hicofore Project Developers.
# All rights reserved.
#
# SPDX-License-Identifier: BSD-3-Clause

"""Entry point of the ``hicofore`` command."""

from __future__ import annotations

import argparse
import logging
import sys

import hicofore
from hicofore.errors import HicoforeError

# local imports
from hicofore.scripts import ablate, cli_args, evaluate, forecast, train

logger = logging.getLogger("hicofore")

COMMANDS = {
    "train": (train, "Train the mixture forecaster."),
    "forecast": (forecast, "Draw a coherent forecast distribution."),
    "evaluate": (evaluate, "Score a checkpoint on the test window."),
    "ablate": (ablate, "Sweep one configuration axis over seeds."),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hicofore", description="Hierarchically coherent probabilistic forecasting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {hicofore.__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (module, help_text) in COMMANDS.items():
        subparser = subparsers.add_parser(name, help=help_text, description=help_text)
        module.add_arguments(subparser)
        cli_args.add_common_args(subparser)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Run a subcommand; library errors are logged and turned into exit status 1."""
    args_cli = build_parser().parse_args(argv)
    try:
        cli_args.setup_logging(args_cli)
        return COMMANDS[args_cli.command][0].main(args_cli)
    except HicoforeError as err:
        logger.error("%s", err)
        return 1


if __name__ == "__main__":
    # run the main execution
    sys.exit(main())
