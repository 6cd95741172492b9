"""Seller revenue with and without buyback, and without any contract, across consumer laws."""

import argparse
import csv
import sys

from delegation import dist, resale


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ks", default="1,1.5,2,3,4", help="consumer laws F(x) = x^k")
    args = ap.parse_args()
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["k", "with_buyback", "no_buyback", "laissez_faire", "no_buyback_over_with"])
    G = dist.uniform()
    for k in (float(x) for x in args.ks.split(",")):
        env = resale.ResaleEnv(G, dist.power(k))
        bb, nb = resale.revenue_with_buyback(env), resale.revenue_no_buyback(env)
        lf = resale.laissez_faire(env).revenue
        writer.writerow([k, f"{bb:.8f}", f"{nb:.8f}", f"{lf:.8f}", f"{nb / bb:.6f}"])


if __name__ == "__main__":
    main()
