"""Barenblatt refinement study over several p and operator kinds, errors masked to 0.8 R."""
import argparse

import numpy as np

from harnacklab.core import EllipticityParams, Grid
from harnacklab.operators import OperatorSpec
from harnacklab.solutions import BarenblattSpec, barenblatt_eval
from harnacklab.solver import SolverConfig, convergence_study


def study(p, levels, dx0):
    params = EllipticityParams(1.0, 1.0, p, 1)
    spec = BarenblattSpec(params)
    exact = lambda X, T: barenblatt_eval(spec, X, T).value
    mask = lambda X, t: np.abs(X[..., 0]) < 0.8 * spec.support_radius(t)
    half = 1.25 * float(spec.support_radius(1.1))
    # keep the box a whole number of coarse cells
    half = dx0 * np.ceil(half / dx0)
    make = lambda lev: Grid((0.0,), (half,), dx0 / 2 ** lev, 1.0, 1.1, 0.1)
    return convergence_study(exact, make, SolverConfig(OperatorSpec("model", params, q=p)), levels, mask)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="+", default=[2.5, 3.0, 4.0])
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--dx", type=float, default=1 / 64)
    args = ap.parse_args()
    print(f"{'p':>5} {'dx':>10} {'linf':>10} {'l1':>10} {'ord_inf':>8} {'ord_1':>8} {'steps':>7}")
    for p in args.p:
        rows, dec = study(p, args.levels, args.dx)
        for r in rows:
            print(f"{p:5.2f} {r.dx:10.3e} {r.linf:10.3e} {r.l1:10.3e} {r.order_linf:8.3f} {r.order_l1:8.3f} {r.steps:7d}")
        print(f"      strictly decreasing: {dec}")


if __name__ == "__main__":
    main()
