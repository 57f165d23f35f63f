"""Plot-ready CSV of the Pacini-to-sharp width ratio against the regressor correlation.

Usage: python scripts/pacini_figure.py [--out pacini.csv]
"""

import argparse

from fusebound.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="pacini.csv")
    ap.add_argument("--N", default=str(10 ** 5))
    a = ap.parse_args()
    raise SystemExit(main(["compare-pacini", "--N", a.N, "--format", "csv", "--out", a.out]))
