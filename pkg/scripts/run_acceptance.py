#!/usr/bin/env python3
"""Run the acceptance criteria and print one line per criterion.

    python3 scripts/run_acceptance.py              # all of A1-A9
    python3 scripts/run_acceptance.py A3 A7 --jobs 4
"""
import argparse
import sys

from kml.acceptance import CHECKS, run_criteria


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("ids", nargs="*", help=f"subset of {', '.join(CHECKS)}")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    ids = [i.upper() for i in args.ids] or None
    results = run_criteria(ids, jobs=args.jobs)
    for r in results:
        print(r.line())
    failed = [r.cid for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
