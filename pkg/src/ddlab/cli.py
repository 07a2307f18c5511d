"""Command line: ``ddlab gen|run|report``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench

log = logging.getLogger("ddlab")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddlab", description="Interface solvers for substructured elasticity.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen", help="write a template manifest")
    g.add_argument("--out", default="manifest.json", help="manifest path to write")

    r = sub.add_parser("run", help="run every case of a manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out", default=None, help="output directory (default: the manifest's 'out')")
    r.add_argument("--format", choices=sorted(bench.EMITTERS), default="markdown")
    r.add_argument("--threads", type=int, default=1, help="threads for per-subdomain factorizations")
    r.add_argument("--tol", type=float, default=None, help="override every method's tolerance")

    rep = sub.add_parser("report", help="re-emit a stored result table")
    rep.add_argument("--out", required=True, help="directory holding table.json")
    rep.add_argument("--format", choices=sorted(bench.EMITTERS), default="markdown")
    return p


def _load_manifest(path, tol):
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SystemExit(f"ddlab: manifest {path} not found")
    except json.JSONDecodeError as exc:
        raise SystemExit(f"ddlab: manifest {path} is not valid JSON: {exc}")
    if tol is not None:
        for m in d.get("methods", []):
            m["tol"] = tol
    try:
        return bench.RunManifest.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise SystemExit(f"ddlab: invalid manifest {path}: {exc}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.verb == "gen":
        Path(args.out).write_text(bench.template_manifest().to_json() + "\n")
        print(args.out)
        return 0

    if args.verb == "report":
        try:
            table = bench.load_table(args.out)
        except FileNotFoundError:
            print(f"ddlab: no table.json in {args.out}; run first", file=sys.stderr)
            return 2
        sys.stdout.write(bench.EMITTERS[args.format][0](table))
        return 1 if table.failed else 0

    if args.threads < 1:
        print("ddlab: --threads must be >= 1", file=sys.stderr)
        return 2
    manifest = _load_manifest(args.manifest, args.tol)
    out = Path(args.out or manifest.out)
    table = bench.run_sweep(manifest, out, threads=args.threads)
    try:
        bench.emit(table, "json", out)
        path = bench.emit(table, args.format, out)
    except OSError as exc:
        print(f"ddlab: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(bench.EMITTERS[args.format][0](table))
    log.info("wrote %s", path)
    if table.failed:
        bad = [f"{r['method']} @ {r['axis']}" for r in table.rows if r["flag"]]
        print("ddlab: failed cases: " + ", ".join(bad), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
