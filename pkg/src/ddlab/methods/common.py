"""Shared interface-level machinery: assembled operators, coarse data, reconstruction."""
from __future__ import annotations

import time
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from ..interface import assemble, build_scaling
from ..krylov import KrylovConfig, cg, gmres
from ..local_ops import local_operators
from ..problem import global_residual, oracle_solve
from .config import MethodConfig, SolverReport


def block_split(x, sizes):
    out, k = [], 0
    for n in sizes:
        out.append(x[k:k + n])
        k += n
    return out


def independent_columns(X: np.ndarray, tol=1e-10) -> np.ndarray:
    """Subset of columns of X with full column rank (pivoted QR, original order kept)."""
    if X.shape[1] == 0:
        return X
    _, Rq, piv = sla.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(Rq))
    rank = int(np.sum(d > tol * d[0])) if d.size and d[0] > 0 else 0
    return X[:, np.sort(piv[:rank])]


class Context:
    """Problem, local operators and one scaling/flavor choice."""

    def __init__(self, problem, scaling: str = "multiplicity", flavor: str = "redundant", rbm_mode: str = "geometric"):
        self.problem = problem
        self.topo = problem.topology
        self.ops = local_operators(problem, rbm_mode)
        key = ("scaling", scaling)
        if key not in problem.cache:
            problem.cache[key] = build_scaling(self.topo, problem, scaling)
        self.scaling = problem.cache[key]
        self.flavor = flavor
        self.A_p = self.topo.A_p
        self.At_p = self.scaling.Ap_tilde
        self.A_d = self.topo.dual[flavor].ops
        self.At_d = self.scaling.Ad_tilde[flavor]
        self.n_p = self.topo.n_primal
        self.n_d = self.topo.dual[flavor].n_rows
        self.f_norm = float(np.linalg.norm(problem.f_global))
        self.n_sub = len(self.ops)

    # local data as block lists
    @property
    def bp(self):
        return [o.bp for o in self.ops]

    @property
    def Rb(self):
        return [o.Rb for o in self.ops]

    @property
    def rbm_counts(self):
        return [o.R.shape[1] for o in self.ops]

    def e(self) -> np.ndarray:
        parts = [o.Rb.T @ o.bp for o in self.ops if o.floating]
        return np.concatenate(parts) if parts else np.zeros(0)

    def coarse_columns(self, assem) -> np.ndarray:
        """[A^(s) R_b^(s)] over floating subdomains, for a given assembly list."""
        cols = [assem[s] @ o.Rb for s, o in enumerate(self.ops) if o.floating]
        n = assem[0].shape[0]
        return np.hstack(cols) if cols else np.zeros((n, 0))

    # primal interface
    def Sp_apply(self, x):
        loc = [A.T @ x for A in self.A_p]
        return assemble(self.A_p, [o.Sp @ v for o, v in zip(self.ops, loc)])

    def Sp_map(self) -> LinearOperator:
        return LinearOperator((self.n_p, self.n_p), matvec=self.Sp_apply, rmatvec=self.Sp_apply, dtype=float)

    def bp_assembled(self):
        return assemble(self.A_p, self.bp)

    def neumann_apply(self, r, assem=None):
        assem = self.At_p if assem is None else assem
        return assemble(assem, [o.schur_dual_apply(A.T @ r, check=False) for o, A in zip(self.ops, assem)])

    # dual interface
    def Sd_apply(self, lam):
        return assemble(self.A_d, [o.Sd @ (A.T @ lam) for o, A in zip(self.ops, self.A_d)])

    def Sd_map(self) -> LinearOperator:
        return LinearOperator((self.n_d, self.n_d), matvec=self.Sd_apply, rmatvec=self.Sd_apply, dtype=float)

    def dual_rhs(self):
        """-b_d = -Σ A_d S_d b_p."""
        return -assemble(self.A_d, [o.Sd @ o.bp for o in self.ops])

    def local_matrix(self, kind: str, s: int):
        o = self.ops[s]
        if kind == "dirichlet":
            return o.Sp
        Kbb = o.K[o.b][:, o.b]
        if kind == "lumped":
            return Kbb.toarray()
        if kind == "superlumped":
            return np.diag(Kbb.diagonal())
        raise ValueError(kind)

    def dual_precond(self, kind: str) -> Optional[LinearOperator]:
        """Ã_d X Ã_dᵀ with X in {S_p, K_bb, diag K_bb}."""
        if kind == "none":
            return None
        mats = [self.local_matrix(kind, s) for s in range(self.n_sub)]

        def mv(r):
            return assemble(self.At_d, [X @ (A.T @ r) for X, A in zip(mats, self.At_d)])

        return LinearOperator((self.n_d, self.n_d), matvec=mv, rmatvec=mv, dtype=float)

    def dual_Q(self, kind: str) -> Optional[LinearOperator]:
        if kind == "identity":
            return None
        if kind == "inverse_multiplicity":
            w = 1.0 / self.topo.multiplicity[self.topo.dual[self.flavor].row_primal]
            return LinearOperator((self.n_d, self.n_d), matvec=lambda v: w * v, rmatvec=lambda v: w * v, dtype=float)
        return self.dual_precond(kind)

    # reconstruction and residuals
    def average(self, ub_blocks) -> np.ndarray:
        return assemble(self.At_p, ub_blocks)

    def global_from_primal(self, u_primal) -> np.ndarray:
        """Global displacement from a unique interface field by local Dirichlet solves."""
        u = np.zeros(self.problem.n_global)
        for o, A in zip(self.ops, self.A_p):
            loc = o.dirichlet_solve(A.T @ u_primal)
            u[o.sub.global_dofs] = loc
        return u

    def true_residual(self, u) -> float:
        return global_residual(self.problem, u)

    def dual_global_residual(self, r, At_d=None, A_d_rows=None) -> float:
        """‖A_p S_p Ã_dᵀ r‖/‖f‖: global residual of the averaged dual iterate."""
        At_d = self.At_d if At_d is None else At_d
        v = assemble(self.A_p, [o.Sp @ (A.T @ r) for o, A in zip(self.ops, At_d)])
        return float(np.linalg.norm(v)) / self.f_norm


def krylov_config(cfg: MethodConfig) -> KrylovConfig:
    return KrylovConfig(tol=cfg.tol, maxiter=cfg.maxiter, reorth=cfg.reorth)


def use_gmres(cfg: MethodConfig, default_gmres: bool) -> bool:
    if cfg.solver == "auto":
        return default_gmres
    return cfg.solver == "gmres"


def finish(ctx: Context, cfg: MethodConfig, res, u, coarse, t0, extras=None, true_history=None) -> SolverReport:
    rep = SolverReport(
        method=cfg.method, label=cfg.display, iterations=res.iterations, converged=res.converged,
        history=list(res.history), true_residual=ctx.true_residual(u), coarse=tuple(int(c) for c in coarse),
        seconds=time.perf_counter() - t0, true_history=true_history, extras=extras or {},
    )
    return rep


def run_krylov(S, b, cfg, precond, proj, x0=None, monitor=None, ref=None, callback=None, default_gmres=False,
               monitor_true=None):
    """CG or GMRes per config. Under GMRes the CG monitor (or ``monitor_true(x, r)``) guards the stop."""
    kc = krylov_config(cfg)
    if use_gmres(cfg, default_gmres):
        if monitor_true is None and monitor is not None:
            monitor_true = lambda x, r: monitor(r, None)  # noqa: E731
        return gmres(S, b, precond=precond, config=kc, proj=proj, x0=x0, callback=callback,
                     monitor_true=monitor_true, ref_true=ref)
    return cg(S, b, precond=precond, config=kc, proj=proj, x0=x0, monitor=monitor, ref=ref, callback=callback)


def oracle_error(problem, u) -> float:
    ref = oracle_solve(problem)
    n = np.linalg.norm(ref)
    return float(np.linalg.norm(u - ref) / n) if n > 0 else float(np.linalg.norm(u))
