"""Run every figure recipe of the CLI into one output directory."""

import sys
from pathlib import Path

from superburst.cli import RECIPES, main

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("figures")
status = 0
for fig in sorted(RECIPES):
    rc = main(["reproduce", fig, "--out-dir", str(out)])
    print(f"{fig}: exit {rc}")
    status = status or rc
sys.exit(status)
