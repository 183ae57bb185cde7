#!/usr/bin/env python3
"""Feed the six published pair rows through `relbot analyze --pairs` and print the Average row."""

import csv
import sys
import tempfile
from pathlib import Path

from relbot.cli import main
from relbot.metrics import FACTOR_COLUMNS

ROWS = [
    ("T", "W", 0.0, 4.59, 4.41, 2.08),
    ("W", "T", 0.0, 1.00, 3.24, 3.01),
    ("H", "W", 0.0, 1.00, 1.02, 1.02),
    ("W", "H", 0.03, 1.00, 1.55, 1.38),
    ("T", "H", 0.0, 6.20, 131.63, 31.78),
    ("H", "T", 0.0, 4.45, 8.03, 2.99),
]

if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="pairs-"))
    out.mkdir(parents=True, exist_ok=True)
    with (out / "pairs.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "transfer", "similarity", *FACTOR_COLUMNS])
        w.writerows(ROWS)
    sys.exit(main(["analyze", "--pairs", str(out / "pairs.csv")]))
