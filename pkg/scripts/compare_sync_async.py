#!/usr/bin/env python3
"""Synchronous vs asynchronous overlay on the pricing experiment.

Writes compare.csv with aligned seed-averaged series for both modes and
prints the final running-suboptimality ratio.
"""

import sys
from pathlib import Path

from asaddle.cli import main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "pricing.json"

if __name__ == "__main__":
    sys.exit(main(["compare", str(CONFIG), *sys.argv[1:]]))
