"""Batch driver: manifests, case runs, sweeps, trend statistics and report emission."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .local_ops import local_operators
from .methods import MethodConfig, SolverReport, solve
from .problem import ProblemSpec, build_problem

AXES = ("subdomains", "h_ratio", "heterogeneity")
COLUMNS = ("method", "axis", "iterations", "coarse_a", "coarse_b", "true_residual", "seconds")
HISTORY_HEADER = ("iter", "res", "relres", "trueres")


@dataclass
class RunManifest:
    problem: ProblemSpec
    methods: list
    sweep: dict = field(default_factory=dict)  # at most one axis name -> list of values
    out: str = "results"
    seed: int = 0
    record_time: bool = True

    def __post_init__(self):
        self.methods = [m if isinstance(m, MethodConfig) else MethodConfig.from_dict(m) for m in self.methods]
        if isinstance(self.problem, dict):
            self.problem = ProblemSpec.from_dict(self.problem)
        self.validate()

    def validate(self):
        if not self.methods:
            raise ValueError("the manifest needs at least one method")
        unknown = set(self.sweep) - set(AXES)
        if unknown:
            raise ValueError(f"unknown sweep axes {sorted(unknown)}; allowed: {AXES}")
        if len(self.sweep) > 1:
            raise ValueError("sweep over one axis at a time")
        for axis, values in self.sweep.items():
            if not values:
                raise ValueError(f"sweep axis {axis!r} has no values")
            if axis == "subdomains" and self.problem.kind == "square2d":
                bad = [v for v in values if math.isqrt(int(v)) ** 2 != int(v)]
                if bad:
                    raise ValueError(f"square decompositions need square subdomain counts, got {bad}")
            if axis == "heterogeneity" and self.problem.kind != "square2d":
                raise ValueError("heterogeneity sweeps need a square2d problem")
        for v in self.axis_values():
            self.spec_for(v).validate()

    @property
    def axis(self) -> Optional[str]:
        return next(iter(self.sweep), None)

    def axis_values(self) -> list:
        return list(self.sweep[self.axis]) if self.axis else [None]

    def spec_for(self, value) -> ProblemSpec:
        spec = self.problem
        if self.axis is None:
            return spec
        if self.axis == "subdomains":
            if spec.kind == "square2d":
                p = math.isqrt(int(value))
                return dataclasses.replace(spec, px=p, py=p)
            return dataclasses.replace(spec, px=int(value))
        if self.axis == "h_ratio":
            m = int(value)
            return dataclasses.replace(spec, mx=m, my=m if spec.kind == "square2d" else spec.my)
        e1 = spec.young_pair[0] if spec.young_pair else spec.young
        cell = spec.cell or 1
        return dataclasses.replace(spec, young_pair=(float(e1), float(e1) / float(value)), cell=cell)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.to_dict(), "methods": [m.to_dict() for m in self.methods],
            "sweep": {k: list(v) for k, v in self.sweep.items()}, "out": self.out, "seed": self.seed,
            "record_time": self.record_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown manifest fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls.from_dict(json.loads(text))


def template_manifest() -> RunManifest:
    """The 16-subdomain square with the main methods and an H/h sweep."""
    spec = ProblemSpec(kind="square2d", px=4, py=4, mx=8, my=8)
    methods = [
        MethodConfig(method="bdd"),
        MethodConfig(method="bdd", coarse="none"),
        MethodConfig(method="feti"),
        MethodConfig(method="feti", preconditioner="lumped"),
        MethodConfig(method="hybrid", hybrid_split="D-P"),
        MethodConfig(method="fetidp"),
        MethodConfig(method="bddc"),
    ]
    return RunManifest(problem=spec, methods=methods, sweep={"h_ratio": [4, 8, 16]})


# ---------------------------------------------------------------------------
# running


def prepare_local_operators(problem, rbm_mode="geometric", threads: int = 1):
    """Build every subdomain's factorizations, optionally on a thread pool."""
    ops = local_operators(problem, rbm_mode)

    def build(o):
        o.Sp, o.bp, o.Kplus, o.Sd  # noqa: B018 - properties populate the caches

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(build, ops))
    else:
        for o in ops:
            build(o)
    return ops


def case_ok(rep: SolverReport, tol: float) -> bool:
    return bool(rep.converged and rep.error_vs_oracle is not None and rep.error_vs_oracle <= 10 * tol)


def history_csv(rep: SolverReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for k, res, rel, tr in rep.history_rows():
        w.writerow([k, repr(float(res)), repr(float(rel)), "" if np.isnan(tr) else repr(float(tr))])
    return buf.getvalue()


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)


def run_case(problem, cfg: MethodConfig, out_dir=None, tag: str = "", record_time: bool = True,
             threads: int = 1) -> SolverReport:
    """Run one method, check it against the oracle and write JSON + CSV history."""
    if threads > 1:
        prepare_local_operators(problem, cfg.rbm_mode, threads)
    _, rep = solve(problem, cfg)
    if not record_time:
        rep.seconds = 0.0
    rep.extras = {"flag": "" if case_ok(rep, cfg.tol) else "FAILED"}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = _slug(f"{tag}{cfg.display}")
        d = rep.to_dict()
        d["flag"] = rep.extras["flag"]
        (out / f"{stem}.json").write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
        (out / f"{stem}.csv").write_text(history_csv(rep))
    return rep


@dataclass
class ResultTable:
    axis: Optional[str] = None
    rows: list = field(default_factory=list)

    def add(self, rep: SolverReport, axis_value):
        self.rows.append({
            "method": rep.label, "axis": axis_value, "iterations": int(rep.iterations),
            "coarse_a": int(rep.coarse[0]), "coarse_b": int(rep.coarse[1]),
            "true_residual": float(rep.true_residual), "seconds": float(rep.seconds),
            "flag": rep.extras.get("flag", ""),
        })

    @property
    def failed(self) -> bool:
        return any(r["flag"] for r in self.rows)

    def methods(self) -> list:
        seen = []
        for r in self.rows:
            if r["method"] not in seen:
                seen.append(r["method"])
        return seen

    def series(self, method) -> tuple:
        pts = [(r["axis"], r["iterations"]) for r in self.rows if r["method"] == method]
        return [p[0] for p in pts], [p[1] for p in pts]

    def growth_factor(self, method) -> float:
        _, its = self.series(method)
        return its[-1] / max(its[0], 1) if its else float("nan")

    def log_fit(self, method) -> dict:
        """Least squares k ≈ a + b(1 + log(H/h))² with the relative fit residual."""
        x, k = self.series(method)
        return log_fit(x, k)

    def stats(self) -> dict:
        out = {}
        for m in self.methods():
            st = {"growth_factor": self.growth_factor(m)}
            if self.axis == "h_ratio" and len(self.series(m)[0]) >= 2:
                st.update(self.log_fit(m))
            out[m] = st
        return out

    def to_dict(self) -> dict:
        return {"axis": self.axis, "columns": list(COLUMNS), "rows": self.rows, "stats": self.stats()}

    @classmethod
    def from_dict(cls, d: dict) -> "ResultTable":
        return cls(axis=d.get("axis"), rows=list(d.get("rows", [])))


def log_fit(h_ratio, iterations) -> dict:
    x = (1.0 + np.log(np.asarray(h_ratio, dtype=float))) ** 2
    k = np.asarray(iterations, dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, k, rcond=None)
    resid = np.linalg.norm(A @ np.array([a, b]) - k) / max(np.linalg.norm(k), 1e-300)
    return {"fit_a": float(a), "fit_b": float(b), "fit_relres": float(resid)}


def run_sweep(manifest: RunManifest, out_dir=None, threads: int = 1) -> ResultTable:
    table = ResultTable(axis=manifest.axis)
    for value in manifest.axis_values():
        problem = build_problem(manifest.spec_for(value))
        for cfg in manifest.methods:
            tag = "" if value is None else f"{manifest.axis}={value}_"
            rep = run_case(problem, cfg, out_dir, tag, manifest.record_time, threads)
            table.add(rep, value)
    return table


# ---------------------------------------------------------------------------
# emission


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(COLUMNS) + ["flag"])
    for r in table.rows:
        w.writerow([_fmt(r[c]) for c in COLUMNS] + [r["flag"]])
    return buf.getvalue()


def table_markdown(table: ResultTable) -> str:
    """Methods as rows, axis values as columns, cells 'iterations (SC:a+b)'."""
    axis_vals = []
    for r in table.rows:
        if r["axis"] not in axis_vals:
            axis_vals.append(r["axis"])
    head = ["method"] + [f"{table.axis}={v}" if table.axis else "result" for v in axis_vals]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for m in table.methods():
        cells = [m]
        for v in axis_vals:
            hit = [r for r in table.rows if r["method"] == m and r["axis"] == v]
            if hit:
                r = hit[0]
                mark = " FAILED" if r["flag"] else ""
                cells.append(f"{r['iterations']} (SC:{r['coarse_a']}+{r['coarse_b']}){mark}")
            else:
                cells.append("")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def table_json(table: ResultTable) -> str:
    return json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n"


EMITTERS = {"csv": (table_csv, "table.csv"), "json": (table_json, "table.json"), "markdown": (table_markdown, "table.md")}


def emit(table: ResultTable, fmt: str, out_dir) -> Path:
    if fmt not in EMITTERS:
        raise ValueError(f"format must be one of {sorted(EMITTERS)}")
    fn, name = EMITTERS[fmt]
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / name
        path.write_text(fn(table))
    except OSError as exc:
        raise OSError(f"cannot write report into {out}: {exc}") from exc
    return path


def load_table(out_dir) -> ResultTable:
    path = Path(out_dir) / "table.json"
    return ResultTable.from_dict(json.loads(path.read_text()))
