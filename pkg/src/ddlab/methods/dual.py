"""Dual strategies: FETI with its preconditioner/projector/initialization variants, and A-FETI."""
from __future__ import annotations

import time

import numpy as np

from ..krylov import AdmissibilityProjector, nest_projectors
from .common import Context, finish, run_krylov
from .config import MethodConfig
from .constraints import dual_corner_columns


def init_metric(ctx: Context, norm: str) -> list:
    """Local blocks of D used by the split initializations."""
    out = []
    for o in ctx.ops:
        if norm == "diag_kbb":
            out.append(np.diag(1.0 / o.K[o.b][:, o.b].diagonal()))
        elif norm == "schur":
            out.append(o.Sd)
        else:
            raise ValueError(norm)
    return out


def feti_initialization(ctx: Context, proj: AdmissibilityProjector, kind: str, norm: str = "diag_kbb"):
    """λ0 = P λ00 + x0, with λ00 = −(A_d D A_dᵀ)⁺ A_d D y.

    y is the local boundary load f_b (classical split) or the condensed load
    b_p (condensed split). kind = "zero" keeps only the admissibility term.
    """
    if kind == "zero":
        return proj.x0.copy()
    if kind == "classical_split":
        y = [o.f[o.b] for o in ctx.ops]
    elif kind == "condensed_split":
        y = ctx.bp
    else:
        raise ValueError(kind)
    D = init_metric(ctx, norm)
    Ad = [A.toarray() for A in ctx.A_d]
    ADA = sum(A @ Ds @ A.T for A, Ds in zip(Ad, D))
    rhs = sum(A @ (Ds @ ys) for A, Ds, ys in zip(Ad, D, y))
    lam00 = -np.linalg.pinv(0.5 * (ADA + ADA.T), rcond=1e-10, hermitian=True) @ rhs
    return proj.P(lam00) + proj.x0


class DualSetup:
    """Operator, right-hand side and admissibility projector of the dual problem."""

    def __init__(self, ctx: Context, Q_kind: str):
        self.ctx = ctx
        self.S = ctx.Sd_map()
        self.b = ctx.dual_rhs()
        self.G = ctx.coarse_columns(ctx.A_d)
        self.e = ctx.e()
        self.proj = AdmissibilityProjector(self.G, -self.e, Q=ctx.dual_Q(Q_kind))

    def local_boundary(self, lam, alpha):
        """u_b^(s) = S_d(b_p + A_dᵀλ) + R_b α."""
        ctx = self.ctx
        out, k = [], 0
        for o, A in zip(ctx.ops, ctx.A_d):
            ub = o.schur_dual_apply(o.bp + A.T @ lam, check=False)
            if o.floating:
                r = o.R.shape[1]
                ub = ub + o.Rb @ alpha[k:k + r]
                k += r
            out.append(ub)
        return out

    def reconstruct(self, lam):
        alpha = self.proj.multipliers(self.b - self.S.matvec(lam)) if self.G.shape[1] else np.zeros(0)
        ub = self.local_boundary(lam, alpha)
        return self.ctx.global_from_primal(self.ctx.average(ub)), alpha


def dual_monitor(ctx: Context):
    """Global-residual estimate of the averaged iterate, unnormalized."""
    return (lambda r, z: ctx.f_norm * ctx.dual_global_residual(r)), ctx.f_norm


def solve_feti(problem, cfg: MethodConfig, callback=None, flavor=None):
    t0 = time.perf_counter()
    ctx = Context(problem, cfg.scaling, flavor or cfg.flavor, cfg.rbm_mode)
    ds = DualSetup(ctx, cfg.projector_Q)
    proj = ds.proj
    lam0 = feti_initialization(ctx, proj, cfg.initialization, cfg.init_norm)
    n_aug = 0
    if cfg.constraints == "corners":
        C = dual_corner_columns(ctx)
        n_aug = C.shape[1]
        proj = nest_projectors(proj, C, ds.S, ds.b, x_start=lam0)
        lam0 = proj.x0
    elif cfg.constraints == "custom":
        C = np.asarray(cfg.custom_C, dtype=float).reshape(ctx.n_d, -1)
        n_aug = C.shape[1]
        proj = nest_projectors(proj, C, ds.S, ds.b, x_start=lam0)
        lam0 = proj.x0
    M = ctx.dual_precond(cfg.precond)
    mon, ref = dual_monitor(ctx)
    res = run_krylov(ds.S, ds.b, cfg, M, proj, x0=lam0, monitor=mon, ref=ref, callback=callback)
    u, alpha = ds.reconstruct(res.x)
    rep = finish(ctx, cfg, res, u, (ds.G.shape[1], n_aug), t0,
                 extras={"lambda": res.x, "alpha": alpha, "lambda0": lam0, "G": ds.G, "e": ds.e})
    return u, rep


def solve_afeti(problem, cfg: MethodConfig, callback=None):
    """FETI on the orthonormal connectivity description."""
    return solve_feti(problem, cfg, callback=callback, flavor="orthonormal")


def jump_blocks(ds: DualSetup, lam):
    """Σ A_d u_b^(s) for the local fields of iterate λ (α from the current residual)."""
    alpha = ds.proj.multipliers(ds.b - ds.S.matvec(lam)) if ds.G.shape[1] else np.zeros(0)
    ub = ds.local_boundary(lam, alpha)
    return sum(A @ v for A, v in zip(ds.ctx.A_d, ub))


def dense_dual_operator(ctx: Context) -> np.ndarray:
    """Explicit 𝐒_d, for tiny fixtures."""
    n = ctx.n_d
    return np.column_stack([ctx.Sd_apply(col) for col in np.eye(n)]) if n else np.zeros((0, 0))
