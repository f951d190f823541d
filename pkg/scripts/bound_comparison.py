#!/usr/bin/env python3
"""Sweep the waist, projection, and Gromov-Milman lower bounds across
dimensions and radii, and print the small-radius slope checks.

Usage:
    python scripts/bound_comparison.py [--k 1] [--out bounds.csv]
"""

import argparse

import numpy as np

from waistlab.bounds import bound_table, ratio_loglog_slope, table_to_csv
from waistlab.norms import euclidean_modulus_curve


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--k", type=int, default=1)
    parser.add_argument("--n-values", type=int, nargs="+",
                        default=[2, 3, 4, 6, 8, 10, 50, 100])
    parser.add_argument("--eps-grid", default="0.1:1.9:0.2")
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    lo, hi, step = (float(t) for t in args.eps_grid.split(":"))
    eps_grid = np.arange(lo, hi + step / 2, step)
    modulus = euclidean_modulus_curve()

    rows = []
    for n in args.n_values:
        rows.extend(bound_table(n, args.k, eps_grid, modulus))
    csv_text = table_to_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        print(csv_text, end="")

    print()
    print("fixed eps=0.5, k=1: waist bound vs projection bound by dimension")
    for n in args.n_values:
        row = next(r for r in rows if r["n"] == n and abs(r["eps"] - 0.5) < 0.11)
        print(f"  n={n:4d}  w={row['w']:.6g}  w2={row['w2']:.3g}  "
              f"gm={row['gm']:.3g}")

    print()
    print("small-radius slope of the codimension ratio (expect l - k):")
    for l, k in ((1, 2), (1, 3), (2, 3)):
        slope = ratio_loglog_slope(max(args.n_values[0], 5), l, k, modulus)
        print(f"  l={l} k={k}: slope={slope:+.4f}")


if __name__ == "__main__":
    main()
