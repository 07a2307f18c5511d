"""Hybrid strategy: per-dof primal or dual treatment, solved by GMRes with two coarse problems."""
from __future__ import annotations

import time

import numpy as np
from scipy.sparse.linalg import LinearOperator

from ..krylov import AdmissibilityProjector, nest_projectors
from .common import Context, finish, run_krylov
from .config import MethodConfig


def split_mask(problem, split) -> np.ndarray:
    """Mask of primal-treated interface dofs from a split string.

    "P" or "D" treats every dof alike; "X-Y" gives the x and y components.
    """
    topo = problem.topology
    split = (split or ("D-P" if problem.dofs_per_node == 2 else "D")).upper()
    tokens = split.split("-")
    if any(t not in ("P", "D") for t in tokens) or len(tokens) not in (1, problem.dofs_per_node):
        raise ValueError(f"bad hybrid split {split!r}: use P, D or one letter per component like 'D-P'")
    if len(tokens) == 1:
        return np.full(topo.n_primal, tokens[0] == "P")
    comp = topo.primal_component
    return np.array([tokens[c] == "P" for c in comp], dtype=bool)


class HybridSystem:
    """Block system in x = (u_p, λ_d) with admissibility Ĝᵀx = −e."""

    def __init__(self, ctx: Context, pmask: np.ndarray):
        self.ctx = ctx
        topo = ctx.topo
        flav = topo.dual[ctx.flavor]
        self.pmask = pmask
        self.P_idx = np.flatnonzero(pmask)
        self.rows_d = np.flatnonzero(~pmask[flav.row_primal])
        self.n_p, self.n_d = self.P_idx.size, self.rows_d.size
        self.n = self.n_p + self.n_d
        self.blk, self.blk2 = [], []
        self.App, self.Add, self.Atpp, self.Atdd = [], [], [], []
        for s, o in enumerate(ctx.ops):
            a_mask = pmask[topo.bprimal[s]]
            blk = o.hybrid(a_mask)
            self.blk.append(blk)
            self.blk2.append(o.hybrid(~a_mask))
            self.App.append(ctx.A_p[s][self.P_idx][:, blk.a])
            self.Add.append(flav.ops[s][self.rows_d][:, blk.b])
            self.Atpp.append(ctx.At_p[s][self.P_idx][:, blk.a])
            self.Atdd.append(ctx.At_d[s][self.rows_d][:, blk.b])

    def split(self, x):
        return x[:self.n_p], x[self.n_p:]

    def apply(self, x, transpose=False):
        up, lam = self.split(x)
        yp, yd = np.zeros(self.n_p), np.zeros(self.n_d)
        for blk, A, D in zip(self.blk, self.App, self.Add):
            H = blk.matrix.T if transpose else blk.matrix
            out = H @ np.concatenate([A.T @ up, D.T @ lam])
            yp += A @ out[:blk.a.size]
            yd += D @ out[blk.a.size:]
        return np.concatenate([yp, yd])

    def rhs(self):
        bp = sum(A @ blk.b_A for blk, A in zip(self.blk, self.App))
        bd = -sum(D @ blk.b_B for blk, D in zip(self.blk, self.Add))
        return np.concatenate([np.zeros(self.n_p) + bp, np.zeros(self.n_d) + bd])

    def _columns(self, parts_p, parts_d):
        cols = []
        for s, (cp, cd) in enumerate(zip(parts_p, parts_d)):
            if cp.shape[1]:
                cols.append(np.vstack([cp, cd]))
        return np.hstack(cols) if cols else np.zeros((self.n, 0))

    def admissibility(self):
        """G = (A_pp K_AE R; A_dd t_B R), Ĝ = (−A_pp K_AE R; A_dd t_B R), e = R_Eᵀ f_E."""
        G = self._columns([A @ b.KAE_R for A, b in zip(self.App, self.blk)],
                          [D @ b.tB_R for D, b in zip(self.Add, self.blk)])
        Gh = self._columns([-(A @ b.KAE_R) for A, b in zip(self.App, self.blk)],
                           [D @ b.tB_R for D, b in zip(self.Add, self.blk)])
        e = np.concatenate([b.e for b in self.blk if b.R.shape[1]] or [np.zeros(0)])
        return G, Gh, e

    def optimality(self):
        """Ĥ = (Ã_pp t R; −Ã_dd K R) from the kernels of the preconditioner's local problems."""
        return self._columns([A @ b.tB_R for A, b in zip(self.Atpp, self.blk2)],
                             [-(D @ b.KAE_R) for D, b in zip(self.Atdd, self.blk2)])

    def Q(self, kind):
        ctx = self.ctx
        Qd = ctx.dual_Q(kind)
        if Qd is None:
            return None

        def mv(x):
            up, lam = self.split(x)
            full = np.zeros(ctx.n_d)
            full[self.rows_d] = lam
            return np.concatenate([up, Qd.matvec(full)[self.rows_d]])

        return LinearOperator((self.n, self.n), matvec=mv, rmatvec=mv, dtype=float)

    def preconditioner(self):
        """Scaled sum of the inverse hybrid operators H(d, p)."""

        def mv(r):
            rp, rd = self.split(r)
            zp, zd = np.zeros(self.n_p), np.zeros(self.n_d)
            for b2, Ap, Ad in zip(self.blk2, self.Atpp, self.Atdd):
                out = b2.matrix @ np.concatenate([Ad.T @ rd, Ap.T @ rp])
                zd += Ad @ out[:b2.a.size]
                zp += Ap @ out[b2.a.size:]
            return np.concatenate([zp, zd])

        return LinearOperator((self.n, self.n), matvec=mv, dtype=float)

    def local_fields(self, x, alpha):
        up, lam = self.split(x)
        out, k = [], 0
        for s, (blk, A, D) in enumerate(zip(self.blk, self.App, self.Add)):
            o = self.ctx.ops[s]
            A_loc = o.b[blk.a]
            uA = A.T @ up
            rhs = o.f[blk.E].copy()
            rhs[np.searchsorted(blk.E, o.b[blk.b])] += D.T @ lam
            rhs -= o.K[blk.E][:, A_loc] @ uA
            u = np.zeros(o.sub.n)
            uE = blk.Kplus.solve(rhs)
            r = blk.R.shape[1]
            if r:
                uE = uE + blk.R @ alpha[k:k + r]
                k += r
            u[blk.E] = uE
            u[A_loc] = uA
            out.append(u)
        return out


def solve_hybrid(problem, cfg: MethodConfig, callback=None):
    t0 = time.perf_counter()
    ctx = Context(problem, cfg.scaling, cfg.flavor, cfg.rbm_mode)
    hs = HybridSystem(ctx, split_mask(problem, cfg.hybrid_split))
    S = LinearOperator((hs.n, hs.n), matvec=hs.apply, rmatvec=lambda v: hs.apply(v, True), dtype=float)
    b = hs.rhs()
    G, Gh, e = hs.admissibility()
    first = AdmissibilityProjector(G, -e, Q=hs.Q(cfg.projector_Q), Ghat=Gh)
    Hh = hs.optimality()
    proj = nest_projectors(first, Hh, S, b) if Hh.shape[1] else first
    M = hs.preconditioner() if cfg.precond != "none" else None

    def reconstruct(x):
        alpha = first.multipliers(b - S.matvec(x)) if G.shape[1] else np.zeros(0)
        fields = hs.local_fields(x, alpha)
        return ctx.global_from_primal(ctx.average([v[o.b] for v, o in zip(fields, ctx.ops)]))

    def true_monitor(x, r):
        return ctx.f_norm * ctx.true_residual(reconstruct(x))

    res = run_krylov(S, b, cfg, M, proj, ref=ctx.f_norm, callback=callback, default_gmres=True,
                     monitor_true=true_monitor)
    u = reconstruct(res.x)
    rep = finish(ctx, cfg, res, u, (G.shape[1], Hh.shape[1]), t0,
                 extras={"x": res.x, "G": G, "Ghat": Gh, "e": e, "H": Hh, "system": hs, "projector": proj})
    return u, rep
