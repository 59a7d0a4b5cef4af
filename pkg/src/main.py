#!/usr/bin/env python3
"""
Carleson Check - multiscale triangle-excess analysis of finite metric spaces.

This tool provides a command-line interface for:
- Generating reference sets (segments, curves, Koch and Cantor sets, big-piece unions)
- Building dyadic cube filtrations and validating them
- Computing Carleson sums of the triangle excess over cubes and balls
- Verifying the John-Nirenberg-Stromberg packing lemma on cube trees
- Running the boundedness/growth check along generator ladders
"""

import logging
import sys
from typing import Optional, Sequence

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def setup_logging(level: int = logging.WARNING) -> None:
    """Configure the root logger on stderr so stdout stays machine-readable."""
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point."""
    setup_logging()

    # Import here so logging is configured before the numeric stack loads
    from cli.commands import run

    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
