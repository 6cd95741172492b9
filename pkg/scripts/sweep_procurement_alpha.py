"""Delegation cap b_hat and principal value as the weight on the supplier's rent grows."""

import argparse
import csv
import sys

import numpy as np

from delegation import dist, procurement


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", default="0,0.25,0.5,1,1.5,2,3")
    ap.add_argument("--k", type=float, default=1.0, help="benefit law F(b) = b^k")
    ap.add_argument("--b-grid", type=int, default=101)
    args = ap.parse_args()
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["alpha", "b_hat", "b_bar", "principal_value", "first_order_residual"])
    for alpha in (float(a) for a in args.alphas.split(",")):
        env = procurement.ProcurementEnv(dist.power(args.k), dist.uniform(), alpha, b_grid_size=args.b_grid)
        iv = procurement.optimal_cutoff(env)
        writer.writerow([alpha, *(np.format_float_positional(v, 10) for v in (iv.b_hat, iv.b_bar, iv.principal_value, iv.foc_residual))])


if __name__ == "__main__":
    main()
