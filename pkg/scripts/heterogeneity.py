#!/usr/bin/env python3
"""FETI on the checkerboard problem: preconditioner, projector, scaling and initialization grid."""
import argparse
import itertools

from ddlab.methods import MethodConfig, solve
from ddlab.problem import ProblemSpec, build_problem


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--m", type=int, default=8)
    ap.add_argument("--cell", type=int, default=4, help="checkerboard cell size in elements")
    ap.add_argument("--contrast", type=float, default=1e5)
    args = ap.parse_args(argv)

    e1 = 2e5
    spec = ProblemSpec(kind="square2d", px=args.p, py=args.p, mx=args.m, my=args.m,
                       young_pair=(e1, e1 / args.contrast), cell=args.cell)
    problem = build_problem(spec)
    print(f"{spec.label()}  contrast {args.contrast:g}")
    print("| scaling | preconditioner | Q | init | iterations |")
    print("|---|---|---|---|---|")
    grid = itertools.product(["multiplicity", "stiffness"], ["dirichlet", "lumped", "superlumped"],
                             ["identity", "dirichlet"], ["zero", "classical_split", "condensed_split"])
    for scaling, prec, q, init in grid:
        cfg = MethodConfig(method="feti", scaling=scaling, preconditioner=prec, projector_Q=q, initialization=init)
        _, rep = solve(problem, cfg)
        mark = "" if rep.converged else " FAILED"
        print(f"| {scaling} | {prec} | {q} | {init} | {rep.iterations}{mark} |")


if __name__ == "__main__":
    main()
