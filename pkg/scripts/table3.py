"""Sensitivity of bounds and coverage to the number of cells K, observing (X_c, W_a).

Usage: python scripts/table3.py [--reps 1000] [--out table3.csv]
"""

import argparse

from fusebound.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", default="1000")
    ap.add_argument("--out", default="table3.csv")
    ap.add_argument("--workers", default="1")
    a = ap.parse_args()
    raise SystemExit(main(["simulate", "--panel", "3", "--n", "400,1200,4800",
                           "--k-sweep", "3,5,10,20,50,100", "--reps", a.reps,
                           "--workers", a.workers, "--out", a.out]))
