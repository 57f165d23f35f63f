"""Coverage table for the three observation panels across sample sizes.

Usage: python scripts/table1.py [--reps 2000] [--out table1.csv]
"""

import argparse

from fusebound.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", default="2000")
    ap.add_argument("--out", default="table1.csv")
    ap.add_argument("--workers", default="1")
    a = ap.parse_args()
    raise SystemExit(main(["simulate", "--panels", "1,2,3", "--n", "400,800,1200,2400,4800",
                           "--reps", a.reps, "--workers", a.workers, "--out", a.out]))
