"""Interface solution strategies and the common dispatcher."""
from __future__ import annotations

from .common import Context, oracle_error
from .config import MethodConfig, SolverReport


def _solvers():
    from . import dp, dual, hybrid, mixed, primal

    return {
        "bdd": primal.solve_bdd,
        "pfeti": primal.solve_pfeti,
        "bddc": primal.solve_bddc,
        "feti": dual.solve_feti,
        "afeti": dual.solve_afeti,
        "hybrid": hybrid.solve_hybrid,
        "fetidp": dp.solve_fetidp,
        "mixed2": mixed.solve_mixed2,
    }


def solve(problem, cfg: MethodConfig, callback=None, check_oracle: bool = True):
    """Run one method; returns (global displacement, report)."""
    cfg.validate()
    u, rep = _solvers()[cfg.method](problem, cfg, callback=callback)
    if check_oracle:
        rep.error_vs_oracle = oracle_error(problem, u)
    return u, rep


__all__ = ["Context", "MethodConfig", "SolverReport", "solve", "oracle_error"]
