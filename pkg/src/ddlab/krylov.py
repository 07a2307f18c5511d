"""Krylov solvers with admissibility projection, augmentation and their nesting.

All projector algebra is written for possibly nonsymmetric systems: the
admissibility constraint reads ``Ĝᵀx = c`` while the Lagrange multiplier
enters the equation through a possibly different column block ``G``
(``S x + G α = b``). For symmetric problems ``Ĝ = G``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, aslinearoperator

REORTH = ("none", "full")


@dataclass
class KrylovConfig:
    tol: float = 1e-6
    maxiter: int = 1000
    reorth: str = "full"
    record_history: bool = True
    breakdown_tol: float = 0.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")
        if self.reorth not in REORTH:
            raise ValueError(f"reorth must be one of {REORTH}")


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)  # monitored measure / reference
    residuals: list = field(default_factory=list)  # raw monitored measure
    directions: Optional[np.ndarray] = None


class KrylovBreakdown(ArithmeticError):
    pass


def as_map(A) -> LinearOperator:
    if A is None:
        return None
    if isinstance(A, LinearOperator):
        return A
    if callable(A) and not hasattr(A, "shape"):
        raise TypeError("bare callables need a dimension; wrap them in a LinearOperator")
    return aslinearoperator(A)


def _matmat(op, X):
    if X.shape[1] == 0:
        return np.zeros((op.shape[0], 0))
    return np.column_stack([op.matvec(X[:, k]) for k in range(X.shape[1])])


def _rmatmat(op, X):
    if X.shape[1] == 0:
        return np.zeros((op.shape[1], 0))
    return np.column_stack([op.rmatvec(X[:, k]) for k in range(X.shape[1])])


class _Coarse:
    """LU of a small dense coarse matrix with a rank check."""

    def __init__(self, M, what, rank_tol=1e-12, strict=True):
        self.size = M.shape[0]
        self.M = M
        if self.size == 0:
            return
        sv = np.linalg.svd(M, compute_uv=False)
        self.pinv = None
        if sv[-1] <= rank_tol * sv[0]:
            msg = f"{what} coarse matrix is rank deficient (cond > {1 / rank_tol:.0e})"
            if strict:
                raise np.linalg.LinAlgError(msg)
            warnings.warn(msg + "; falling back to a pseudo-inverse")
            self.pinv = np.linalg.pinv(M, rcond=rank_tol)
        else:
            self.lu = sla.lu_factor(M)

    def solve(self, y, trans=False):
        if self.size == 0:
            return np.zeros((0,) + np.shape(y)[1:])
        if self.pinv is not None:
            return (self.pinv.T if trans else self.pinv) @ y
        return sla.lu_solve(self.lu, y, trans=1 if trans else 0)


class ProjectorPair:
    """Initialization x0 with the projector P on the correction and Wᵀ on residuals.

    ``P`` keeps every correction in the admissible (and augmentation-consistent)
    subspace; ``Wt`` removes the multiplier contribution from residuals.
    """

    def __init__(self, n, x0=None, P=None, Pt=None, Wt=None, sizes=(0, 0)):
        self.n = n
        self.x0 = np.zeros(n) if x0 is None else x0
        self._P = P
        self._Pt = Pt
        self._Wt = Wt
        self.sizes = tuple(sizes)

    def P(self, v):
        return v if self._P is None else self._P(v)

    def Pt(self, v):
        return v if self._Pt is None else self._Pt(v)

    def Wt(self, v):
        return v if self._Wt is None else self._Wt(v)

    @classmethod
    def identity(cls, n):
        return cls(n)


class AdmissibilityProjector(ProjectorPair):
    """Ĝᵀx = c: x0 = QG(ĜᵀQG)⁻¹c, P = I − QG(ĜᵀQG)⁻¹Ĝᵀ, Wᵀ = I − G(ĜᵀQG)⁻¹ĜᵀQ."""

    def __init__(self, G, c, Q=None, Ghat=None, strict=True):
        G = np.asarray(G, dtype=float)
        n, k = G.shape
        Ghat = G if Ghat is None else np.asarray(Ghat, dtype=float)
        Q = as_map(Q)
        if Q is None:
            QG, QtGh = G, Ghat
        else:
            QG, QtGh = _matmat(Q, G), _rmatmat(Q, Ghat)
        self.G, self.Ghat, self.QG, self.QtGh = G, Ghat, QG, QtGh
        self.coarse = _Coarse(Ghat.T @ QG, "admissibility", strict=strict)
        c = np.asarray(c, dtype=float).reshape(k)
        x0 = QG @ self.coarse.solve(c) if k else np.zeros(n)
        if k == 0:
            super().__init__(n, x0=x0)
            return
        super().__init__(
            n, x0=x0,
            P=lambda v: v - QG @ self.coarse.solve(Ghat.T @ v),
            Pt=lambda v: v - Ghat @ self.coarse.solve(QG.T @ v, trans=True),
            Wt=lambda v: v - G @ self.coarse.solve(QtGh.T @ v),
            sizes=(k, 0),
        )

    def multipliers(self, residual_unprojected):
        """α = (ĜᵀQG)⁻¹ĜᵀQ(b − Sx)."""
        return self.coarse.solve(self.QtGh.T @ residual_unprojected)


def make_admissibility_projector(G, e, Q=None, Ghat=None, strict=True) -> AdmissibilityProjector:
    return AdmissibilityProjector(G, e, Q=Q, Ghat=Ghat, strict=strict)


class NestedProjector(ProjectorPair):
    """Augmentation by C (test space H) nested inside a first-level pair.

    With C* = P C:  x_init = x0 + C*(HᵀWᵀSC*)⁻¹HᵀWᵀ(b − Sx0),
    P_tot = P − C*(HᵀWᵀSC*)⁻¹HᵀWᵀSP.
    """

    def __init__(self, first: ProjectorPair, C, S, b, H=None, x_start=None):
        S = as_map(S)
        C = np.asarray(C, dtype=float)
        n, c = C.shape
        H = C if H is None else np.asarray(H, dtype=float)
        self.first = first
        Cs = np.column_stack([first.P(C[:, k]) for k in range(c)]) if c else np.zeros((n, 0))
        SCs = _matmat(S, Cs)
        WSCs = np.column_stack([first.Wt(SCs[:, k]) for k in range(c)]) if c else np.zeros((n, 0))
        self.coarse = _Coarse(H.T @ WSCs, "augmentation")
        x0 = first.x0 if x_start is None else np.asarray(x_start, dtype=float)
        if c:
            r0 = first.Wt(b - S.matvec(x0))
            x0 = x0 + Cs @ self.coarse.solve(H.T @ r0)
        # Y = Pᵀ Sᵀ W H so that HᵀWᵀSPv = Yᵀv
        if c:
            WH = np.column_stack([self._W(first, H[:, k]) for k in range(c)])
            SWH = _rmatmat(S, WH)
            Y = np.column_stack([first.Pt(SWH[:, k]) for k in range(c)])
        else:
            Y = np.zeros((n, 0))
        self.C, self.H, self.Cs, self.Y, self.WSCs = C, H, Cs, Y, WSCs
        sizes = (first.sizes[0], c)
        if c == 0:
            super().__init__(n, x0=x0, P=first._P, Pt=first._Pt, Wt=first._Wt, sizes=sizes)
            return

        def P(v):
            pv = first.P(v)
            return pv - Cs @ self.coarse.solve(Y.T @ v)

        def Pt(v):
            return first.Pt(v) - Y @ self.coarse.solve(Cs.T @ v, trans=True)

        super().__init__(n, x0=x0, P=P, Pt=Pt, Wt=first.Wt, sizes=sizes)

    @staticmethod
    def _W(first, v):
        # transpose of Wᵀ, needed once per column of H
        if isinstance(first, AdmissibilityProjector) and first.G.shape[1]:
            return v - first.QtGh @ first.coarse.solve(first.G.T @ v, trans=True)
        return v


def make_augmentation_projector(C, S, b, H=None) -> NestedProjector:
    n = np.asarray(C).shape[0]
    return NestedProjector(ProjectorPair.identity(n), C, S, b, H=H)


def nest_projectors(first: ProjectorPair, C, S, b, H=None, x_start=None) -> NestedProjector:
    return NestedProjector(first, C, S, b, H=H, x_start=x_start)


# ---------------------------------------------------------------------------
# solvers


def _setup(S, b, precond, proj, x0):
    S = as_map(S)
    n = S.shape[0]
    b = np.asarray(b, dtype=float)
    M = as_map(precond)
    proj = proj if proj is not None else ProjectorPair.identity(n)
    x = proj.x0.copy() if x0 is None else np.asarray(x0, dtype=float).copy()
    apply_M = (lambda v: v) if M is None else M.matvec
    return S, b, apply_M, proj, x


def cg(S, b, precond=None, config: Optional[KrylovConfig] = None, proj: Optional[ProjectorPair] = None,
       x0=None, monitor: Optional[Callable] = None, ref: Optional[float] = None,
       callback: Optional[Callable] = None) -> KrylovResult:
    """Projected preconditioned conjugate gradient.

    ``monitor(r, z)`` returns the convergence measure (default ‖r‖), compared
    with ``tol * ref`` (default ref = ‖b‖). ``callback(j, x, r)`` sees every
    iterate. With ``reorth == "full"`` every new direction is S-orthogonalized
    against all previous ones by modified Gram-Schmidt.
    """
    cfg = config or KrylovConfig()
    S, b, apply_M, proj, x = _setup(S, b, precond, proj, x0)
    monitor = monitor or (lambda r, z: np.linalg.norm(r))
    ref = np.linalg.norm(b) if ref is None else ref
    r = proj.Wt(b - S.matvec(x))
    z = proj.P(apply_M(r))
    hist, raw = [], []

    def record(j):
        val = monitor(r, z)
        raw.append(val)
        hist.append(val / ref if ref > 0 else val)
        if callback is not None:
            callback(j, x, r)
        return val

    val = record(0)
    if ref == 0 or val <= cfg.tol * ref:
        return KrylovResult(x, 0, True, hist, raw)
    W, Q, WQ = [], [], []
    w = z.copy()
    zr_old = z @ r
    converged = False
    it = 0
    for it in range(1, cfg.maxiter + 1):
        q = proj.Wt(S.matvec(w))
        wq = w @ q
        wnq = np.linalg.norm(w) * np.linalg.norm(q)
        if not wq > cfg.breakdown_tol * wnq:
            if wq < -1e-12 * wnq or wnq == 0.0 and np.linalg.norm(w) > 0:
                raise KrylovBreakdown(f"(w, Sw) = {wq:.3e} <= 0 at iteration {it}: operator not positive")
            # curvature lost to round-off: stagnation, reported as not converged
            it -= 1
            break
        alpha = (r @ w) / wq if cfg.reorth == "full" else zr_old / wq
        x = x + alpha * w
        r = r - alpha * q
        z = proj.P(apply_M(r))
        val = record(it)
        if cfg.reorth == "full":
            W.append(w)
            Q.append(q)
            WQ.append(wq)
        if val <= cfg.tol * ref:
            converged = True
            break
        if cfg.reorth == "full":
            w = z.copy()
            for wi, qi, d in zip(W, Q, WQ):
                w = w - ((w @ qi) / d) * wi
        else:
            zr = z @ r
            w = z + (zr / zr_old) * w
            zr_old = zr
    dirs = np.column_stack(W) if W else None
    return KrylovResult(x, it, converged, hist, raw, dirs)


def gmres(S, b, precond=None, config: Optional[KrylovConfig] = None, proj: Optional[ProjectorPair] = None,
          x0=None, callback: Optional[Callable] = None, monitor_true: Optional[Callable] = None,
          ref_true: Optional[float] = None) -> KrylovResult:
    """Left-preconditioned projected GMRes with modified Gram-Schmidt Arnoldi.

    Solves P M Wᵀ S x = P M Wᵀ b from the projector's initialization; the
    residual norm comes from the Givens-rotated Hessenberg system, so x is only
    formed at the end (and when a callback asks for iterates).

    ``monitor_true(x, r)`` optionally guards the stop: once the preconditioned
    residual is below tolerance the iterate is formed and accepted only if
    ``monitor_true(x, r) <= tol * ref_true`` as well. On high-contrast
    problems the preconditioned residual alone can stop far from the solution.
    """
    cfg = config or KrylovConfig()
    S, b, apply_M, proj, x = _setup(S, b, precond, proj, x0)

    def op(v):
        return proj.P(apply_M(proj.Wt(S.matvec(v))))

    z0 = proj.P(apply_M(proj.Wt(b - S.matvec(x))))
    beta = np.linalg.norm(z0)
    hist, raw = [1.0 if beta > 0 else 0.0], [beta]
    if callback is not None:
        callback(0, x, proj.Wt(b - S.matvec(x)))
    if beta == 0.0:
        return KrylovResult(x, 0, True, hist, raw)
    m = cfg.maxiter
    V = [z0 / beta]
    Hm = np.zeros((m + 1, m))
    cs, sn = np.zeros(m), np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    converged = False
    k = 0
    for k in range(1, m + 1):
        j = k - 1
        w = op(V[j])
        for i in range(k):
            Hm[i, j] = V[i] @ w
            w = w - Hm[i, j] * V[i]
        # one re-pass when orthogonality is visibly lost
        corr = np.array([V[i] @ w for i in range(k)])
        if np.linalg.norm(corr) > 1e-8 * np.linalg.norm(w):
            for i in range(k):
                w = w - corr[i] * V[i]
                Hm[i, j] += corr[i]
        wn = np.linalg.norm(w)
        Hm[k, j] = wn
        happy = wn <= 1e-14 * np.abs(Hm[:k + 1, j]).max()
        for i in range(j):
            t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = t
        den = np.hypot(Hm[j, j], Hm[k, j])
        cs[j], sn[j] = (1.0, 0.0) if den == 0 else (Hm[j, j] / den, Hm[k, j] / den)
        Hm[j, j] = den
        Hm[k, j] = 0.0
        g[k] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        res = abs(g[k])
        raw.append(res)
        hist.append(res / beta)
        if callback is not None:
            y = sla.solve_triangular(Hm[:k, :k], g[:k])
            xk = x + np.column_stack(V[:k]) @ y
            callback(k, xk, proj.Wt(b - S.matvec(xk)))
        if happy or res <= cfg.tol * beta:
            if monitor_true is None:
                converged = True
                break
            y = sla.solve_triangular(Hm[:k, :k], g[:k])
            xk = x + np.column_stack(V[:k]) @ y
            rt = ref_true if ref_true is not None else np.linalg.norm(b)
            converged = bool(monitor_true(xk, proj.Wt(b - S.matvec(xk))) <= cfg.tol * rt)
            if converged or happy:
                # an exhausted Krylov space cannot improve further
                break
        V.append(w / wn)
    y = sla.solve_triangular(Hm[:k, :k], g[:k])
    x = x + np.column_stack(V[:k]) @ y
    return KrylovResult(x, k, converged, hist, raw)


def explicit_matrix(op, n=None) -> np.ndarray:
    op = as_map(op)
    return _matmat(op, np.eye(op.shape[1]))
