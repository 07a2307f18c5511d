#!/usr/bin/env python3
"""Residual-history gaps between method pairs that coincide in exact arithmetic."""
import argparse

import numpy as np

from ddlab.methods import MethodConfig, solve
from ddlab.problem import ProblemSpec, build_problem

PAIRS = [
    ("afeti vs feti(Q=1/m)", dict(method="afeti"), dict(method="feti", projector_Q="inverse_multiplicity")),
    ("pfeti(Q=dirichlet) vs bdd", dict(method="pfeti", projector_Q="dirichlet"), dict(method="bdd")),
    ("hybrid P vs bdd", dict(method="hybrid", hybrid_split="P"), dict(method="bdd", solver="gmres")),
    ("hybrid D vs feti", dict(method="hybrid", hybrid_split="D"), dict(method="feti", solver="gmres")),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--m", type=int, default=4)
    ap.add_argument("--tol", type=float, default=1e-10)
    args = ap.parse_args(argv)
    problem = build_problem(ProblemSpec(kind="square2d", px=args.p, py=args.p, mx=args.m, my=args.m))
    for name, a, b in PAIRS:
        _, ra = solve(problem, MethodConfig(tol=args.tol, **a))
        _, rb = solve(problem, MethodConfig(tol=args.tol, **b))
        ha, hb = np.asarray(ra.history), np.asarray(rb.history)
        n = min(ha.size, hb.size)
        gap = np.max(np.abs(ha[:n] - hb[:n]))
        print(f"{name:28s} iterations {ra.iterations:3d} / {rb.iterations:3d}  history gap {gap:.2e}")


if __name__ == "__main__":
    main()
