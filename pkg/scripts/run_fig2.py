#!/usr/bin/env python3
"""Three-user outage vs SNR, coordinated vs non-coordinated, R in {1, 2}.

Writes plot-ready CSV (see coharq.cli.CSV_HEADER). Typical use:

    python3 scripts/run_fig2.py --trials 1000000 --out fig2.csv
"""

import argparse

from coharq.cli import run_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="fig2.csv")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    rows = run_preset("fig2", args.trials, args.seed, args.out, n_jobs=args.jobs)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
