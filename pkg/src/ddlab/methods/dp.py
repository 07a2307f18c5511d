"""Partially assembled (corner-continuous) strategies: FETI-DP and the change of basis for edge averages."""
from __future__ import annotations

import dataclasses
import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .common import Context, finish, run_krylov
from .config import MethodConfig
from .constraints import corner_primal_dofs


class PartialAssembly:
    """Local hybrid blocks with the primal set ``pset`` displacement-driven.

    Every subdomain block H(A, B) maps (u_A, λ_B) to (λ_A, u_B); A holds the
    boundary dofs in ``pset``, B the others. The corner coarse matrix
    s_pp = Σ A_pp H_AA A_ppᵀ is assembled dense and Cholesky-factored once.
    """

    def __init__(self, ctx: Context, pset: np.ndarray, flavor: str = "redundant"):
        self.ctx = ctx
        topo = ctx.topo
        self.pset = np.asarray(pset, dtype=bool)
        self.P_idx = np.flatnonzero(self.pset)
        self.D_idx = np.flatnonzero(~self.pset)
        flav = topo.dual[flavor]
        self.rows_d = np.flatnonzero(~self.pset[flav.row_primal])
        At_d = ctx.scaling.dual(flavor)
        self.blocks, self.App, self.Add, self.Atdd, self.Atpd, self.Atd_full = [], [], [], [], [], []
        bad = []
        for s, o in enumerate(ctx.ops):
            blk = o.hybrid(self.pset[topo.bprimal[s]])
            if blk.R.shape[1]:
                bad.append(s)
            self.blocks.append(blk)
            self.App.append(ctx.A_p[s][self.P_idx][:, blk.a])
            self.Add.append(flav.ops[s][self.rows_d][:, blk.b])
            self.Atdd.append(At_d[s][self.rows_d][:, blk.b])
            self.Atd_full.append(At_d[s][self.rows_d])
            self.Atpd.append(ctx.At_p[s][self.D_idx][:, blk.b])
        if bad:
            raise np.linalg.LinAlgError(
                f"subdomains {bad} keep zero-energy modes once the primal set is imposed; "
                "enrich the corner set (for instance with edge extremities or edge averages)")
        n = self.P_idx.size
        spp = np.zeros((n, n))
        bP = np.zeros(n)
        for blk, A in zip(self.blocks, self.App):
            if blk.a.size:
                spp += A @ (A @ blk.matrix[:blk.a.size, :blk.a.size].T).T
                bP += A @ blk.b_A
        self.spp = 0.5 * (spp + spp.T)
        self.bP = bP
        self.chol = sla.cho_factor(self.spp) if n else None
        self.n_d = self.rows_d.size

    def spp_solve(self, y):
        return sla.cho_solve(self.chol, y) if self.P_idx.size else np.zeros(0)

    def H_AA(self, s):
        na = self.blocks[s].a.size
        return self.blocks[s].matrix[:na, :na]

    def H_AB(self, s):
        return self.blocks[s].AB

    def H_BA(self, s):
        return self.blocks[s].BA

    def H_BB(self, s):
        na = self.blocks[s].a.size
        return self.blocks[s].matrix[na:, na:]

    # dual-side (FETI-DP) pieces: λ lives on the d rows of the dual interface
    def s_pd(self, lam):
        return sum(A @ (self.H_AB(s) @ (D.T @ lam)) for s, (A, D) in enumerate(zip(self.App, self.Add)))

    def s_dp(self, uP):
        return sum(D @ (self.H_BA(s) @ (A.T @ uP)) for s, (A, D) in enumerate(zip(self.App, self.Add)))

    def s_dd(self, lam):
        return sum(D @ (self.H_BB(s) @ (D.T @ lam)) for s, D in enumerate(self.Add))

    def b_d(self):
        return sum(D @ self.blocks[s].b_B for s, D in enumerate(self.Add))

    def condensed_apply(self, lam):
        """(s_dd − s_dp s_pp⁻¹ s_pd) λ."""
        out = self.s_dd(lam)
        if self.P_idx.size:
            out = out - self.s_dp(self.spp_solve(self.s_pd(lam)))
        return out

    def condensed_rhs(self):
        rhs = -self.b_d()
        if self.P_idx.size:
            rhs = rhs - self.s_dp(self.spp_solve(self.bP))
        return rhs

    def corner_values(self, lam):
        return self.spp_solve(self.bP - self.s_pd(lam)) if self.P_idx.size else np.zeros(0)

    def local_field(self, s, u_P, lam_B):
        """Full local displacement for corner values u_P and efforts λ_B on the B dofs."""
        blk = self.blocks[s]
        o = self.ctx.ops[s]
        A_loc = o.b[blk.a]
        uA = self.App[s].T @ u_P
        rhs = o.f[blk.E].copy()
        rhs[np.searchsorted(blk.E, o.b[blk.b])] += lam_B
        rhs -= o.K[blk.E][:, A_loc] @ uA
        u = np.zeros(o.sub.n)
        u[blk.E] = blk.Kplus.solve(rhs)
        u[A_loc] = uA
        return u

    def local_fields(self, lam):
        uP = self.corner_values(lam)
        return [self.local_field(s, uP, D.T @ lam) for s, D in enumerate(self.Add)]


def dp_preconditioner(pa: PartialAssembly) -> LinearOperator:
    """Σ Ã_dd S_p[B, B] Ã_ddᵀ: Dirichlet problems with scaled imposed displacement."""
    mats = []
    for s, o in enumerate(pa.ctx.ops):
        b = pa.blocks[s].b
        mats.append(o.Sp[np.ix_(b, b)])

    def mv(r):
        return sum(A @ (X @ (A.T @ r)) for A, X in zip(pa.Atdd, mats))

    n = pa.n_d
    return LinearOperator((n, n), matvec=mv, rmatvec=mv, dtype=float)


# ---------------------------------------------------------------------------
# change of basis


def edge_groups(topo, corners: np.ndarray) -> list:
    """Non-corner primal dofs grouped by (owner set, component), sorted by primal id."""
    groups = {}
    comp = topo.primal_component if topo.primal_component is not None else np.zeros(topo.n_primal, dtype=int)
    for j in np.flatnonzero(~corners):
        key = (tuple(topo.owners[j].tolist()), int(comp[j]))
        groups.setdefault(key, []).append(int(j))
    return [np.array(sorted(g), dtype=int) for _, g in sorted(groups.items())]


def householder_average(k: int) -> np.ndarray:
    """Orthogonal symmetric H with H e1 = ones/√k, so (Hᵀu)_0 = √k · mean(u)."""
    v = np.zeros(k)
    v[0] = 1.0
    v -= np.ones(k) / np.sqrt(k)
    nv = v @ v
    if nv < 1e-30:
        return np.eye(k)
    return np.eye(k) - 2.0 * np.outer(v, v) / nv


@dataclasses.dataclass
class ChangeOfBasis:
    T: list  # per subdomain sparse orthogonal transform, u = T û
    edges: list  # per edge: primal ids
    pset: np.ndarray  # corners plus the first transformed dof of every edge

    def to_original(self, s, u_hat):
        return self.T[s] @ u_hat

    def to_transformed(self, s, u):
        return self.T[s].T @ u


def build_change_of_basis(problem, corners=None) -> ChangeOfBasis:
    topo = problem.topology
    corners = corner_primal_dofs(problem) if corners is None else np.asarray(corners, dtype=bool)
    edges = edge_groups(topo, corners)
    Hs = [householder_average(e.size) for e in edges]
    T = []
    for s, sub in enumerate(problem.subdomains):
        n = sub.n
        rows, cols, vals = [], [], []
        touched = np.zeros(n, dtype=bool)
        for e, H in zip(edges, Hs):
            if s not in topo.owners[e[0]]:
                continue
            loc = np.array([topo.boundary[s][topo.local_position(s, j)] for j in e])
            touched[loc] = True
            r, c = np.meshgrid(loc, loc, indexing="ij")
            rows.extend(r.ravel())
            cols.extend(c.ravel())
            vals.extend(H.ravel())
        rest = np.flatnonzero(~touched)
        rows.extend(rest)
        cols.extend(rest)
        vals.extend(np.ones(rest.size))
        T.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    pset = corners.copy()
    for e in edges:
        pset[e[0]] = True
    return ChangeOfBasis(T=T, edges=edges, pset=pset)


def transformed_problem(problem, cob: ChangeOfBasis):
    """Copy of the problem with K̂ = TᵀKT and f̂ = Tᵀf on every subdomain."""
    subs = [
        dataclasses.replace(sub, K=(T.T @ sub.K @ T).tocsr(), f=T.T @ sub.f)
        for sub, T in zip(problem.subdomains, cob.T)
    ]
    return dataclasses.replace(problem, subdomains=subs, cache={})


# ---------------------------------------------------------------------------
# FETI-DP


def _dp_solve(ctx, pset, cfg, callback):
    pa = PartialAssembly(ctx, pset, cfg.flavor)
    n = pa.n_d
    S = LinearOperator((n, n), matvec=pa.condensed_apply, rmatvec=pa.condensed_apply, dtype=float)
    M = dp_preconditioner(pa) if cfg.precond != "none" else None
    Atd = pa.Atd_full

    def mon(r, z):
        return ctx.f_norm * ctx.dual_global_residual(r, At_d=Atd) if n else 0.0

    res = run_krylov(S, pa.condensed_rhs(), cfg, M, None, monitor=mon, ref=ctx.f_norm, callback=callback)
    return pa, res


def solve_fetidp(problem, cfg: MethodConfig, callback=None, pset=None):
    t0 = time.perf_counter()
    ctx = Context(problem, cfg.scaling, cfg.flavor, cfg.rbm_mode)
    if cfg.fetidp_constraints == "corners" or pset is not None:
        pset = corner_primal_dofs(problem) if pset is None else np.asarray(pset, dtype=bool)
        pa, res = _dp_solve(ctx, pset, cfg, callback)
        fields = pa.local_fields(res.x)
    else:
        cob = build_change_of_basis(problem)
        hat = transformed_problem(problem, cob)
        hctx = Context(hat, cfg.scaling, cfg.flavor, "algebraic")
        pa, res = _dp_solve(hctx, cob.pset, cfg, callback)
        fields = [cob.to_original(s, v) for s, v in enumerate(pa.local_fields(res.x))]
    ub = [v[o.b] for v, o in zip(fields, ctx.ops)]
    u = ctx.global_from_primal(ctx.average(ub))
    return u, finish(ctx, cfg, res, u, (0, pa.P_idx.size), t0, extras={"lambda": res.x})


__all__ = [
    "PartialAssembly", "dp_preconditioner", "build_change_of_basis", "transformed_problem",
    "solve_fetidp",
]
