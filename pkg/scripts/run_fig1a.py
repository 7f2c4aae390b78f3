#!/usr/bin/env python3
"""Two-user outage vs SNR, coordinated vs non-coordinated, M in {2, 3}.

Writes plot-ready CSV (see coharq.cli.CSV_HEADER). Typical use:

    python3 scripts/run_fig1a.py --trials 1000000 --out fig1a.csv
"""

import argparse

from coharq.cli import run_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="fig1a.csv")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    rows = run_preset("fig1a", args.trials, args.seed, args.out, n_jobs=args.jobs)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
