"""Primal strategies: BDD, P-FETI and BDDC."""
from __future__ import annotations

import time
import warnings

import numpy as np
from scipy.sparse.linalg import LinearOperator

from ..interface import assemble
from ..krylov import AdmissibilityProjector, make_augmentation_projector
from .common import Context, finish, independent_columns, run_krylov
from .config import MethodConfig
from .constraints import corner_primal_dofs, primal_corner_columns
from .dp import PartialAssembly


def _primal_monitor(ctx):
    return (lambda r, z: float(np.linalg.norm(r))), ctx.f_norm


def _augmentation(ctx, cfg, S, b):
    cols = []
    if cfg.coarse == "auto_rbm":
        cols.append(ctx.coarse_columns(ctx.At_p))
    if cfg.constraints == "corners":
        cols.append(primal_corner_columns(ctx))
    elif cfg.constraints == "custom":
        cols.append(np.asarray(cfg.custom_C, dtype=float).reshape(ctx.n_p, -1))
    C = np.hstack(cols) if cols else np.zeros((ctx.n_p, 0))
    n_rbm = cols[0].shape[1] if cfg.coarse == "auto_rbm" else 0
    if cfg.constraints != "none":
        C = independent_columns(C)
    return C, n_rbm


def solve_bdd(problem, cfg: MethodConfig, callback=None):
    t0 = time.perf_counter()
    ctx = Context(problem, cfg.scaling, "redundant", cfg.rbm_mode)
    S = ctx.Sp_map()
    b = ctx.bp_assembled()
    if cfg.coarse == "none" and any(o.floating for o in ctx.ops) and cfg.precond == "neumann":
        warnings.warn("floating subdomains without coarse space: Neumann preconditioner uses a "
                      "pseudo-inverse representative on non-admissible efforts")
    C, _ = _augmentation(ctx, cfg, S, b)
    proj = make_augmentation_projector(C, S, b)
    M = None
    if cfg.precond == "neumann":
        M = LinearOperator((ctx.n_p, ctx.n_p), matvec=ctx.neumann_apply, rmatvec=ctx.neumann_apply, dtype=float)
    mon, ref = _primal_monitor(ctx)
    res = run_krylov(S, b, cfg, M, proj, monitor=mon, ref=ref, callback=callback)
    u = ctx.global_from_primal(res.x)
    rep = finish(ctx, cfg, res, u, (0, C.shape[1]), t0, extras={"G": C})
    return u, rep


def pfeti_preconditioner(ctx: Context, Q_kind: str) -> LinearOperator:
    """H S_d Hᵀ with Hᵀ = Ãᵀ − A_dᵀ Q G_d (G_dᵀ Q G_d)⁻¹ G_pᵀ."""
    Gp = ctx.coarse_columns(ctx.At_p)
    Gd = ctx.coarse_columns(ctx.A_d)
    adm = AdmissibilityProjector(Gd, np.zeros(Gd.shape[1]), Q=ctx.dual_Q(Q_kind))
    QGd = adm.QG
    k = Gd.shape[1]

    def Ht(r):
        loc = [A.T @ r for A in ctx.At_p]
        if k:
            corr = QGd @ adm.coarse.solve(Gp.T @ r)
            loc = [v - A.T @ corr for v, A in zip(loc, ctx.A_d)]
        return loc

    def H(blocks):
        out = assemble(ctx.At_p, blocks)
        if k:
            y = assemble(ctx.A_d, blocks)
            out = out - Gp @ adm.coarse.solve(QGd.T @ y, trans=True)
        return out

    def mv(r):
        return H([o.schur_dual_apply(v, check=False) for o, v in zip(ctx.ops, Ht(r))])

    return LinearOperator((ctx.n_p, ctx.n_p), matvec=mv, rmatvec=mv, dtype=float)


def solve_pfeti(problem, cfg: MethodConfig, callback=None):
    """Primal iteration preconditioned by H S_d Hᵀ, started from the balanced initial guess."""
    t0 = time.perf_counter()
    ctx = Context(problem, cfg.scaling, cfg.flavor, cfg.rbm_mode)
    S = ctx.Sp_map()
    b = ctx.bp_assembled()
    G = ctx.coarse_columns(ctx.At_p)
    proj = make_augmentation_projector(G, S, b)
    M = pfeti_preconditioner(ctx, cfg.projector_Q)
    mon, ref = _primal_monitor(ctx)
    res = run_krylov(S, b, cfg, M, None, x0=proj.x0, monitor=mon, ref=ref, callback=callback)
    u = ctx.global_from_primal(res.x)
    return u, finish(ctx, cfg, res, u, (G.shape[1], 0), t0)


def bddc_preconditioner(pa: PartialAssembly) -> LinearOperator:
    """Coarse corner solve with s_pp⁻¹ plus corner-constrained local Neumann solves.

    The residual is split with the primal scaling restricted to the non-corner
    dofs; corner residuals are taken as assembled.
    """
    n = pa.ctx.n_p

    def mv(r):
        rd = [A.T @ r[pa.D_idx] for A in pa.Atpd]
        z = np.zeros(n)
        zP = np.zeros(0)
        if pa.P_idx.size:
            y = r[pa.P_idx] - sum(A @ (pa.H_AB(s) @ rd[s]) for s, A in enumerate(pa.App))
            zP = pa.spp_solve(y)
            z[pa.P_idx] = zP
        zd = np.zeros(pa.D_idx.size)
        for s, A in enumerate(pa.Atpd):
            loc = pa.H_BB(s) @ rd[s]
            if zP.size:
                loc = loc + pa.H_BA(s) @ (pa.App[s].T @ zP)
            zd += A @ loc
        z[pa.D_idx] = zd
        return z

    return LinearOperator((n, n), matvec=mv, rmatvec=mv, dtype=float)


def solve_bddc(problem, cfg: MethodConfig, callback=None, pset=None):
    t0 = time.perf_counter()
    ctx = Context(problem, cfg.scaling, "redundant", cfg.rbm_mode)
    pset = corner_primal_dofs(problem) if pset is None else np.asarray(pset, dtype=bool)
    pa = PartialAssembly(ctx, pset)
    S = ctx.Sp_map()
    b = ctx.bp_assembled()
    M = bddc_preconditioner(pa) if cfg.precond != "none" else None
    mon, ref = _primal_monitor(ctx)
    res = run_krylov(S, b, cfg, M, None, monitor=mon, ref=ref, callback=callback)
    u = ctx.global_from_primal(res.x)
    return u, finish(ctx, cfg, res, u, (0, pa.P_idx.size), t0, extras={"preconditioner": M})
