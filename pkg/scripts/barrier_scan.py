"""Barrier parameter scan over a list of (lambda, Lambda, p, n) triples; writes one CSV row per triple."""
import argparse
import csv
import time

from harnacklab.core import EllipticityParams
from harnacklab.harnack import find_barrier_params

TRIPLES = [(1, 1, 3, 1), (1, 2, 3, 2), (1, 4, 4, 3)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=100000)
    ap.add_argument("--margin", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="barrier_scan.csv")
    args = ap.parse_args()
    header = ["lam", "Lam", "p", "n", "q", "alpha", "worst_residual", "worst_relative", "feasible",
              "feasible_count", "sufficient_condition", "edge_sign_condition", "seconds"]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for lam, Lam, p, n in TRIPLES:
            t0 = time.perf_counter()
            s = find_barrier_params(EllipticityParams(float(lam), float(Lam), float(p), n), margin=args.margin,
                                    samples=args.samples, seed=args.seed)
            dt = time.perf_counter() - t0
            row = [lam, Lam, p, n, s.q, s.alpha, s.worst_residual, s.worst_relative, s.feasible,
                   s.feasible_count, s.sufficient_condition, s.edge_sign_condition, round(dt, 2)]
            w.writerow(row)
            print(dict(zip(header, row)))


if __name__ == "__main__":
    main()
