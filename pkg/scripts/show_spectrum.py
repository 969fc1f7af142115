#!/usr/bin/env python3
"""Print the spectrum table from a spectrum.csv as aligned plain text.

Reads spectrum.csv written by ``kml spectrum``; no plotting library needed.
"""
import csv
import math
import sys
from pathlib import Path


def main(path: str = "runs/spectrum/spectrum.csv") -> int:
    with open(Path(path), encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    print(f"{'ell':>4} {'log10 mu':>10} {'sup|phi|':>10} {'b ell^2':>10}")
    for r in rows:
        print(f"{r['ell']:>4} {math.log10(float(r['mu'])):10.3f} {float(r['sup_phi']):10.4f} {float(r['b_ell_sq']):10.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main(*sys.argv[1:]))
