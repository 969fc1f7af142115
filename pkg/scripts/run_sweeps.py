#!/usr/bin/env python3
"""Run every experiment config in configs/ through the CLI, one output directory each."""
import argparse
import json
import sys
from pathlib import Path

from kml.cli import main as kml_main

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", type=Path, default=ROOT / "configs")
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    status = 0
    for path in sorted(args.configs.glob("*.json")):
        experiment = json.loads(path.read_text())["experiment"]
        code = kml_main([experiment, "--config", str(path), "--out", str(args.out / path.stem),
                         "--jobs", str(args.jobs)])
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
