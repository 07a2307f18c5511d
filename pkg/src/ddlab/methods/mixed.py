"""Two-subdomain mixed (Robin) interface method."""
from __future__ import annotations

import time
from collections import deque

import numpy as np
import scipy.linalg as sla

from .common import Context, finish, run_krylov
from .config import MethodConfig


def _lift(ctx, s, X):
    A = ctx.A_p[s].toarray()
    return A @ X @ A.T


def strip_schur(o, layers: int) -> np.ndarray:
    """Boundary Schur complement of K restricted to the dofs within ``layers`` graph steps of the boundary."""
    K = o.K.tocsr()
    n = K.shape[0]
    depth = np.full(n, -1)
    depth[o.b] = 0
    queue = deque(o.b.tolist())
    while queue:
        i = queue.popleft()
        if depth[i] >= layers:
            continue
        for j in K.indices[K.indptr[i]:K.indptr[i + 1]]:
            if depth[j] < 0:
                depth[j] = depth[i] + 1
                queue.append(j)
    inner = np.flatnonzero(depth > 0)
    Kbb = K[o.b][:, o.b].toarray()
    if inner.size == 0:
        return Kbb
    Kib = K[inner][:, o.b].toarray()
    X = np.linalg.solve(K[inner][:, inner].toarray(), Kib)
    S = Kbb - Kib.T @ X
    return 0.5 * (S + S.T)


def interface_stiffness(ctx: Context, kind: str, layers: int = 1) -> list:
    """(T1, T2) in primal ordering; each T_s models the neighbor subdomain."""
    local = []
    for o in ctx.ops:
        if kind == "neighbor_schur":
            local.append(o.Sp)
        elif kind == "neighbor_kbb":
            local.append(o.K[o.b][:, o.b].toarray())
        elif kind == "neighbor_strip":
            local.append(strip_schur(o, layers))
        elif kind == "zero":
            local.append(np.zeros((o.nb, o.nb)))
        else:
            raise ValueError(kind)
    lifted = [_lift(ctx, s, X) for s, X in enumerate(local)]
    return [lifted[1], lifted[0]]


def _checked_inverse(M, what):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size and (sv[0] == 0.0 or sv[-1] <= 1e-12 * sv[0]):
        raise np.linalg.LinAlgError(f"{what} is singular (smallest/largest singular value {sv[-1]:.2e}/{sv[0]:.2e})")
    lu = sla.lu_factor(M)
    return lambda y: sla.lu_solve(lu, y)


def mixed2_system(ctx: Context, T):
    """Explicit two-subdomain mixed system in (μ1, μ2) and its right-hand side."""
    if ctx.n_sub != 2:
        raise ValueError(f"the mixed method is restricted to two subdomains, got {ctx.n_sub}")
    S = [_lift(ctx, s, o.Sp) for s, o in enumerate(ctx.ops)]
    b = [ctx.A_p[s] @ o.bp for s, o in enumerate(ctx.ops)]
    T1, T2 = T
    n = ctx.n_p
    I = np.eye(n)
    _checked_inverse(T1 + T2, "T1 + T2")
    inv1 = _checked_inverse(S[0] + T1, "S1 + T1")
    inv2 = _checked_inverse(S[1] + T2, "S2 + T2")
    X2 = (T1 + T2) @ inv2(I)
    X1 = (T1 + T2) @ inv1(I)
    M = np.block([[I, I - X2], [I - X1, I]])
    rhs = np.concatenate([X2 @ b[1], X1 @ b[0]])
    return M, rhs, (inv1, inv2), b


def solve_mixed2(problem, cfg: MethodConfig, callback=None):
    t0 = time.perf_counter()
    ctx = Context(problem, cfg.scaling, "redundant", cfg.rbm_mode)
    T = interface_stiffness(ctx, cfg.mixed_T, cfg.strip_layers)
    M, rhs, (inv1, inv2), b = mixed2_system(ctx, T)
    n = ctx.n_p

    def reconstruct(x):
        u_int = [inv1(x[:n] + b[0]), inv2(x[n:] + b[1])]
        return ctx.global_from_primal(ctx.average([A.T @ v for A, v in zip(ctx.A_p, u_int)]))

    def true_monitor(x, r):
        return ctx.f_norm * ctx.true_residual(reconstruct(x))

    res = run_krylov(M, rhs, cfg, None, None, ref=ctx.f_norm, callback=callback, default_gmres=True,
                     monitor_true=true_monitor)
    u = reconstruct(res.x)
    return u, finish(ctx, cfg, res, u, (0, 0), t0, extras={"matrix": M, "T": T, "mu": res.x})
