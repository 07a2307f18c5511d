#!/usr/bin/env python3
"""Iteration counts of the main methods over subdomain count or H/h, printed as a markdown table."""
import argparse
from pathlib import Path

from ddlab import bench
from ddlab.methods import MethodConfig
from ddlab.problem import ProblemSpec

METHODS = [
    MethodConfig(method="bdd"),
    MethodConfig(method="bdd", coarse="none"),
    MethodConfig(method="feti"),
    MethodConfig(method="feti", preconditioner="lumped"),
    MethodConfig(method="hybrid", hybrid_split="D-P"),
    MethodConfig(method="fetidp"),
    MethodConfig(method="bddc"),
]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axis", choices=["subdomains", "h_ratio"], default="subdomains")
    ap.add_argument("--values", type=int, nargs="+", help="axis values (default 4 9 16 25, or 4 8 16)")
    ap.add_argument("--p", type=int, default=4, help="subdomains per side when sweeping H/h")
    ap.add_argument("--m", type=int, default=16, help="elements per subdomain side when sweeping subdomains")
    ap.add_argument("--out", default="results/scalability")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    if args.axis == "subdomains":
        values = args.values or [4, 9, 16, 25]
        spec = ProblemSpec(kind="square2d", px=2, py=2, mx=args.m, my=args.m)
    else:
        values = args.values or [4, 8, 16]
        spec = ProblemSpec(kind="square2d", px=args.p, py=args.p, mx=4, my=4)
    manifest = bench.RunManifest(problem=spec, methods=METHODS, sweep={args.axis: values}, out=args.out)
    table = bench.run_sweep(manifest, Path(args.out), threads=args.threads)
    for fmt in bench.EMITTERS:
        bench.emit(table, fmt, Path(args.out))
    print(bench.table_markdown(table))
    for method, st in table.stats().items():
        print(f"{method}: " + ", ".join(f"{k}={v:.3g}" for k, v in st.items()))
    return 1 if table.failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
