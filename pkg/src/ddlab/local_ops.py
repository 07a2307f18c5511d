"""Per-subdomain condensed operators, kernels and generalized inverses."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

GEOMETRIC_GAP = 1e-10
ALGEBRAIC_TOL = 1e-8


class AdmissibilityError(ValueError):
    def __init__(self, subdomain, defect):
        super().__init__(f"subdomain {subdomain}: effort not admissible, |R_b^T lambda| = {defect:.3e}")
        self.subdomain = subdomain
        self.defect = defect


class Factor:
    """Sparse LU of a (square, nonsingular) matrix; empty matrices are allowed."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        self.n = A.shape[0]
        self._lu = None
        if self.n:
            try:
                self._lu = splu(A)
            except RuntimeError as exc:
                raise np.linalg.LinAlgError(str(exc)) from exc

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros_like(b)
        if sp.issparse(b):
            b = b.toarray()
        return self._lu.solve(b)


def _orthonormalize(R):
    if R.shape[1] == 0:
        return R
    q, _ = np.linalg.qr(R)
    return q


# ---------------------------------------------------------------------------
# rigid body modes


def candidate_modes(sub) -> np.ndarray:
    """Rigid motions on every local dof (clamped ones included), node*dpn+comp order."""
    xy = sub.coords - sub.coords.mean(axis=0)
    nn = xy.shape[0]
    if sub.dofs_per_node == 1:
        return np.ones((nn, 1))
    Rc = np.zeros((2 * nn, 3))
    Rc[0::2, 0] = 1.0
    Rc[1::2, 1] = 1.0
    Rc[0::2, 2] = -xy[:, 1]
    Rc[1::2, 2] = xy[:, 0]
    return Rc


def rbm_geometric(sub, fixed: Optional[np.ndarray] = None) -> np.ndarray:
    """Kernel of K restricted to the free dofs not in ``fixed`` (free-dof indices).

    The candidate motions are filtered by the conditions they violate: the
    right singular vectors of E^T R_c with negligible singular values.
    """
    fixed = np.zeros(0, dtype=int) if fixed is None else np.asarray(fixed, dtype=int)
    Rc = candidate_modes(sub)
    E = np.concatenate([sub.dirichlet, sub.free[fixed]])
    keep = np.setdiff1d(np.arange(sub.n), fixed)
    if E.size == 0:
        V0 = np.eye(Rc.shape[1])
    else:
        _, sig, vt = np.linalg.svd(Rc[E], full_matrices=True)
        scale = np.linalg.norm(Rc, 2)
        rank = int(np.sum(sig > GEOMETRIC_GAP * scale))
        V0 = vt[rank:].T
    R = Rc[sub.free[keep]] @ V0
    return _orthonormalize(R)


def _distant_nodes(coords: np.ndarray, count: int) -> list:
    """Pick ``count`` mutually far-apart nodes; lowest index wins ties."""
    n = coords.shape[0]
    d = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
    i, j = np.unravel_index(np.argmax(d), d.shape)  # first max in C order
    chosen = [int(min(i, j)), int(max(i, j))]
    while len(chosen) < min(count, n):
        score = d[:, chosen].min(axis=1)
        score[chosen] = -1.0
        chosen.append(int(np.argmax(score)))
    return chosen


def rbm_algebraic(sub, fixed: Optional[np.ndarray] = None) -> np.ndarray:
    """Kernel from the Schur complement on the dofs of a few far-apart nodes."""
    fixed = np.zeros(0, dtype=int) if fixed is None else np.asarray(fixed, dtype=int)
    keep = np.setdiff1d(np.arange(sub.n), fixed)
    K = sub.K[keep][:, keep].tocsc()
    node = sub.dof_node[keep]
    nodes = np.unique(node)
    picked = nodes[_distant_nodes(sub.coords[nodes], 3 if sub.dofs_per_node == 2 else 2)]
    N = np.flatnonzero(np.isin(node, picked))
    O = np.setdiff1d(np.arange(keep.size), N)
    try:
        fac = Factor(K[O][:, O])
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"subdomain {sub.index}: K_OO singular for the preselected nodes {picked.tolist()}; choose another set"
        ) from exc
    KON = K[O][:, N].toarray()
    X = fac.solve(KON)
    S = K[N][:, N].toarray() - KON.T @ X
    S = 0.5 * (S + S.T)
    _, sig, vt = np.linalg.svd(S)
    scale = max(sig.max(initial=0.0), np.abs(K.diagonal()).max())
    rank = int(np.sum(sig > ALGEBRAIC_TOL * scale))
    V0 = vt[rank:].T
    R = np.zeros((keep.size, V0.shape[1]))
    R[N] = V0
    R[O] = -X @ V0
    return _orthonormalize(R)


def detect_rbm(sub, mode: str = "geometric", fixed=None) -> np.ndarray:
    if mode == "geometric":
        return rbm_geometric(sub, fixed)
    if mode == "algebraic":
        return rbm_algebraic(sub, fixed)
    raise ValueError(f"unknown rbm mode {mode!r}")


# ---------------------------------------------------------------------------
# generalized inverse


class GeneralizedInverse:
    """K⁺ built by blocking r dofs picked among ``allowed`` by pivoted QR of Rᵀ."""

    def __init__(self, K, R: np.ndarray, allowed: Optional[np.ndarray] = None, label=""):
        K = sp.csc_matrix(K)
        n = K.shape[0]
        r = R.shape[1]
        allowed = np.arange(n) if allowed is None else np.asarray(allowed, dtype=int)
        self.n = n
        if r:
            if allowed.size < r:
                raise np.linalg.LinAlgError(f"{label}: fewer admissible dofs than kernel modes ({r})")
            _, _, piv = sla.qr(R[allowed].T, mode="economic", pivoting=True)
            sel = np.sort(allowed[piv[:r]])
            sv = np.linalg.svd(R[sel], compute_uv=False)
            if sv.min() < 1e-8 * sv.max() or sv.min() < 1e-10:
                raise np.linalg.LinAlgError(f"{label}: no admissible blocked-dof selection found")
        else:
            sel = np.zeros(0, dtype=int)
        self.blocked = sel
        self.rest = np.setdiff1d(np.arange(n), sel)
        self.fac = Factor(K[self.rest][:, self.rest])

    def solve(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        out[self.rest] = self.fac.solve(y[self.rest])
        return out

    def matrix(self) -> np.ndarray:
        return self.solve(np.eye(self.n))


# ---------------------------------------------------------------------------
# per-subdomain operators


@dataclass
class HybridBlock:
    """H(A, B): (u_A, λ_B) -> (λ_A, u_B) with the remaining dofs eliminated."""

    a: np.ndarray  # boundary positions with imposed displacement
    b: np.ndarray  # boundary positions with imposed effort
    matrix: np.ndarray  # dense, rows/cols ordered (A, B)
    R: np.ndarray  # kernel of K_EE
    E: np.ndarray  # eliminated local dofs
    Kplus: GeneralizedInverse
    KAE_R: np.ndarray  # K_AE R_E (reaction of A dofs to zero-energy modes)
    tB_R: np.ndarray  # t_B R_E
    e: np.ndarray  # R_Eᵀ f_E
    b_A: np.ndarray  # f_A − K_AE K⁺ f_E
    b_B: np.ndarray  # t_B K⁺ f_E

    @property
    def AB(self):
        na = self.a.size
        return self.matrix[:na, na:]

    @property
    def BA(self):
        na = self.a.size
        return self.matrix[na:, :na]


class SubdomainOperators:
    def __init__(self, sub, topo, rbm_mode: str = "geometric"):
        self.sub = sub
        self.s = sub.index
        self.K = sub.K.tocsr()
        self.f = sub.f
        self.b = topo.boundary[self.s]
        self.i = np.setdiff1d(np.arange(sub.n), self.b)
        self.rbm_mode = rbm_mode
        self._Kii = None
        self._Sp = None
        self._bp = None
        self._R = None
        self._Kplus = None
        self._Sd = None
        self._hybrid = {}

    @property
    def nb(self) -> int:
        return self.b.size

    @property
    def Kii(self) -> Factor:
        if self._Kii is None:
            self._Kii = Factor(self.K[self.i][:, self.i])
        return self._Kii

    def _Kib(self):
        return self.K[self.i][:, self.b]

    # primal Schur complement
    @property
    def Sp(self) -> np.ndarray:
        if self._Sp is None:
            Kib = self._Kib().toarray()
            S = self.K[self.b][:, self.b].toarray() - Kib.T @ self.Kii.solve(Kib)
            self._Sp = 0.5 * (S + S.T)
        return self._Sp

    def schur_primal_apply(self, ub):
        Kib = self._Kib()
        return self.K[self.b][:, self.b] @ ub - Kib.T @ self.Kii.solve(Kib @ ub)

    @property
    def bp(self) -> np.ndarray:
        if self._bp is None:
            fi = self.f[self.i]
            self._bp = self.f[self.b] - self._Kib().T @ self.Kii.solve(fi)
        return self._bp

    def condense_rhs(self):
        return self.bp

    def dirichlet_solve(self, ub, f=None):
        """Full local field for imposed boundary displacement (interior equilibrium)."""
        f = self.f if f is None else f
        u = np.zeros(self.sub.n)
        u[self.b] = ub
        u[self.i] = self.Kii.solve(f[self.i] - self._Kib() @ ub)
        return u

    # kernel and generalized inverse
    @property
    def R(self) -> np.ndarray:
        if self._R is None:
            self._R = detect_rbm(self.sub, self.rbm_mode)
        return self._R

    @property
    def Rb(self) -> np.ndarray:
        return self.R[self.b]

    @property
    def floating(self) -> bool:
        return self.R.shape[1] > 0

    @property
    def Kplus(self) -> GeneralizedInverse:
        if self._Kplus is None:
            self._Kplus = GeneralizedInverse(self.K, self.R, allowed=self.i, label=f"subdomain {self.s}")
        return self._Kplus

    @property
    def Sd(self) -> np.ndarray:
        if self._Sd is None:
            T = np.zeros((self.sub.n, self.nb))
            T[self.b, np.arange(self.nb)] = 1.0
            S = self.Kplus.solve(T)[self.b]
            self._Sd = 0.5 * (S + S.T)
        return self._Sd

    def check_admissible(self, lam_b, tol=1e-10):
        if not self.floating:
            return
        defect = np.linalg.norm(self.Rb.T @ lam_b)
        if defect > tol * max(np.linalg.norm(lam_b), 1e-300):
            raise AdmissibilityError(self.s, defect)

    def schur_dual_apply(self, lam_b, check: bool = True):
        if check:
            self.check_admissible(lam_b)
        y = np.zeros(self.sub.n)
        y[self.b] = lam_b
        return self.Kplus.solve(y)[self.b]

    def neumann_solve(self, lam_b, alpha=None):
        """u = K⁺(f + tᵀλ) + R α."""
        y = self.f.copy()
        y[self.b] += lam_b
        u = self.Kplus.solve(y)
        if alpha is not None and self.floating:
            u = u + self.R @ alpha
        return u

    # hybrid Schur complements
    def hybrid(self, a_mask: np.ndarray) -> HybridBlock:
        """Hybrid block with boundary positions ``a_mask`` displacement-driven."""
        a_mask = np.asarray(a_mask, dtype=bool)
        key = a_mask.tobytes()
        if key in self._hybrid:
            return self._hybrid[key]
        a = np.flatnonzero(a_mask)
        bpos = np.flatnonzero(~a_mask)
        A_loc = self.b[a]
        E = np.setdiff1d(np.arange(self.sub.n), A_loc)
        R_E = detect_rbm(self.sub, self.rbm_mode, fixed=A_loc)
        # blocked dofs are interior ones (positions inside E)
        interior_in_E = np.flatnonzero(np.isin(E, self.i))
        KEE = self.K[E][:, E]
        Kp = GeneralizedInverse(KEE, R_E, allowed=interior_in_E, label=f"subdomain {self.s} hybrid block")
        KEA = self.K[E][:, A_loc].toarray()
        tB = np.zeros((E.size, bpos.size))
        tB[np.searchsorted(E, self.b[bpos]), np.arange(bpos.size)] = 1.0
        X = Kp.solve(np.hstack([KEA, tB]))
        XA, XB = X[:, :a.size], X[:, a.size:]
        KAA = self.K[A_loc][:, A_loc].toarray()
        tBrows = np.searchsorted(E, self.b[bpos])
        H = np.block([[KAA - KEA.T @ XA, KEA.T @ XB], [-XA[tBrows], XB[tBrows]]])
        fE = self.f[E]
        KfE = Kp.solve(fE)
        blk = HybridBlock(
            a=a, b=bpos, matrix=H, R=R_E, E=E, Kplus=Kp,
            KAE_R=KEA.T @ R_E, tB_R=R_E[tBrows], e=R_E.T @ fE,
            b_A=self.f[A_loc] - KEA.T @ KfE, b_B=KfE[tBrows],
        )
        self._hybrid[key] = blk
        return blk


def local_operators(problem, rbm_mode: str = "geometric") -> list:
    """Per-subdomain operators, cached on the problem."""
    key = ("local_ops", rbm_mode)
    if key not in problem.cache:
        problem.cache[key] = [SubdomainOperators(sub, problem.topology, rbm_mode) for sub in problem.subdomains]
    return problem.cache[key]


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[1] == 0 and B.shape[1] == 0:
        return np.zeros(0)
    return sla.subspace_angles(A, B)
