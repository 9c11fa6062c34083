#!/usr/bin/env python3
"""Multi-seed consensus-regression experiment.

Writes per-seed and seed-averaged trace CSVs plus a summary with the fitted
log-log slopes of the cumulative suboptimality and constraint violation.
Extra CLI flags (e.g. --T, --out) pass through.
"""

import sys
from pathlib import Path

from asaddle.cli import main

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "consensus.json"

if __name__ == "__main__":
    sys.exit(main(["run", str(CONFIG), *sys.argv[1:]]))
