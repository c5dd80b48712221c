#!/usr/bin/env python3
"""
Contrastive shapelet learning for multivariate time series.
Main entry point for the command-line application.
"""

import logging
import os
import sys

from cli.app import ShapeletLearnerApp
from cli.arguments import build_parser


def setup_logging(log_file=None):
    """DEBUG log to a file when one is given; the console is handled by the app"""
    if log_file:
        logging.basicConfig(filename=log_file, level=logging.DEBUG,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
    else:
        logging.basicConfig(handlers=[logging.NullHandler()], level=logging.DEBUG)
    logging.info('Application started. Working directory: %s', os.getcwd())


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.log_file)
    app = ShapeletLearnerApp()
    code = app.run_args(args)
    logging.info('Command %s finished with exit code %d', args.command, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
