"""Interface description: trace maps, primal and dual assembly operators, scalings.

Block vectors are plain Python lists holding one boundary (or subdomain)
vector per subdomain. Every assembly operator is stored per subdomain as a
sparse matrix acting on that subdomain's boundary dofs:

* ``A_p[s]``: ``n_primal x n_b(s)`` boolean primal assembly,
* ``dual[flavor][s]``: ``n_rows x n_b(s)`` signed dual assembly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

FLAVORS = ("redundant", "nonredundant", "orthonormal")
SCALING_KINDS = ("multiplicity", "stiffness")


@dataclass
class DualFlavor:
    name: str
    ops: list  # per subdomain sparse (n_rows x n_b)
    row_primal: np.ndarray  # primal dof carried by each row

    @property
    def n_rows(self) -> int:
        return self.row_primal.size


@dataclass
class InterfaceTopology:
    n_local: list
    boundary: list  # per subdomain: local dof indices of boundary dofs (trace)
    bprimal: list  # per subdomain: primal index of each boundary dof
    n_primal: int
    relations: np.ndarray  # (k, 3): primal, + subdomain, - subdomain
    A_p: list = field(default_factory=list)
    dual: dict = field(default_factory=dict)
    owners: list = field(default_factory=list)  # per primal dof: sorted owner ids
    forest: np.ndarray = None  # redundant rows kept by the non-redundant flavor
    multiplicity: np.ndarray = None
    # optional geometry of primal dofs (generated problems only)
    primal_global_dof: Optional[np.ndarray] = None
    primal_node: Optional[np.ndarray] = None
    primal_component: Optional[np.ndarray] = None

    @property
    def n_sub(self) -> int:
        return len(self.boundary)

    def n_b(self, s: int) -> int:
        return self.boundary[s].size

    @property
    def crosspoints(self) -> np.ndarray:
        return np.flatnonzero(self.multiplicity >= 3)

    def local_position(self, s: int, primal: int) -> int:
        """Boundary position of a primal dof in subdomain s (-1 if not owned)."""
        hit = np.flatnonzero(self.bprimal[s] == primal)
        return int(hit[0]) if hit.size else -1

    # -- trace -------------------------------------------------------------
    def trace(self, s: int, v: np.ndarray, transposed: bool = False) -> np.ndarray:
        v = np.asarray(v)
        if transposed:
            if v.shape[0] != self.n_b(s):
                raise ValueError(f"subdomain {s}: expected {self.n_b(s)} boundary values, got {v.shape[0]}")
            out = np.zeros((self.n_local[s],) + v.shape[1:])
            out[self.boundary[s]] = v
            return out
        if v.shape[0] != self.n_local[s]:
            raise ValueError(f"subdomain {s}: expected {self.n_local[s]} values, got {v.shape[0]}")
        return v[self.boundary[s]]

    def trace_matrix(self, s: int) -> sp.csr_matrix:
        nb = self.n_b(s)
        return sp.csr_matrix((np.ones(nb), (np.arange(nb), self.boundary[s])), shape=(nb, self.n_local[s]))

    # -- assembly ----------------------------------------------------------
    def ops(self, kind: str, flavor: str = "redundant") -> list:
        if kind == "primal":
            return self.A_p
        if kind == "dual":
            if flavor not in self.dual:
                raise ValueError(f"unknown dual flavor {flavor!r}")
            return self.dual[flavor].ops
        raise ValueError(f"unknown assembly kind {kind!r}")

    def assemble(self, kind: str, blocks, transposed: bool = False, flavor: str = "redundant"):
        """Non-transposed: sum local contributions; transposed: distribute."""
        return assemble(self.ops(kind, flavor), blocks, transposed)


def assemble(ops: Sequence, blocks, transposed: bool = False):
    if transposed:
        x = np.asarray(blocks)
        return [A.T @ x for A in ops]
    if len(blocks) != len(ops):
        raise ValueError("one block per subdomain expected")
    out = None
    for A, v in zip(ops, blocks):
        if v.shape[0] != A.shape[1]:
            raise ValueError(f"block of size {v.shape[0]} does not match operator width {A.shape[1]}")
        c = A @ v
        out = c if out is None else out + c
    return out


def build_topology(problem) -> InterfaceTopology:
    """Topology of a generated problem: primal dofs follow global dof order."""
    subs = problem.subdomains
    n_glob = problem.n_global
    count = np.zeros(n_glob, dtype=int)
    for sub in subs:
        count[sub.global_dofs] += 1
    interface = np.flatnonzero(count >= 2)
    primal_of = -np.ones(n_glob, dtype=int)
    primal_of[interface] = np.arange(interface.size)
    boundary, bprimal = [], []
    for sub in subs:
        loc = np.flatnonzero(count[sub.global_dofs] >= 2)
        boundary.append(loc)
        bprimal.append(primal_of[sub.global_dofs[loc]])
    topo = topology_from_maps([sub.n for sub in subs], boundary, bprimal, interface.size)
    topo.primal_global_dof = interface
    topo.primal_node = problem.global_dof_node[interface]
    topo.primal_component = problem.global_dof_component[interface]
    return topo


def topology_from_maps(n_local, boundary, bprimal, n_primal, relations=None) -> InterfaceTopology:
    """Build every operator from local boundary lists and boundary-to-primal maps.

    ``relations`` optionally fixes the redundant dual rows as (primal, s+, s-)
    triples; by default they are ordered by (low id, high id, primal dof) with
    the + sign on the lower subdomain id.
    """
    n_sub = len(boundary)
    boundary = [np.asarray(b, dtype=int) for b in boundary]
    bprimal = [np.asarray(b, dtype=int) for b in bprimal]
    owners = [[] for _ in range(n_primal)]
    for s in range(n_sub):
        if np.unique(bprimal[s]).size != bprimal[s].size:
            raise ValueError(f"subdomain {s} maps two boundary dofs on one interface dof")
        for j in bprimal[s]:
            owners[j].append(s)
    owners = [np.array(sorted(o), dtype=int) for o in owners]
    mult = np.array([o.size for o in owners], dtype=int)
    lonely = np.flatnonzero(mult < 2)
    if lonely.size:
        raise ValueError(f"interface dofs {lonely.tolist()} are owned by fewer than two subdomains")

    if relations is None:
        rel = []
        for j, o in enumerate(owners):
            for a in range(o.size):
                for b in range(a + 1, o.size):
                    rel.append((o[a], o[b], j))
        rel.sort()
        relations = np.array([(j, a, b) for a, b, j in rel], dtype=int).reshape(-1, 3)
    else:
        relations = np.asarray(relations, dtype=int).reshape(-1, 3)
        for j, a, b in relations:
            if a not in owners[j] or b not in owners[j] or a == b:
                raise ValueError(f"relation ({j}, {a}, {b}) is not a valid pair of owners")

    topo = InterfaceTopology(
        n_local=list(n_local), boundary=boundary, bprimal=bprimal, n_primal=n_primal,
        relations=relations, owners=owners, multiplicity=mult,
    )
    topo.A_p = [
        sp.csr_matrix((np.ones(b.size), (bp, np.arange(b.size))), shape=(n_primal, b.size))
        for b, bp in zip(boundary, bprimal)
    ]
    pos = [dict(zip(bp.tolist(), range(bp.size))) for bp in bprimal]

    def signed_ops(rows):
        """rows: list of (primal, {subdomain: coefficient})."""
        data = [([], [], []) for _ in range(n_sub)]
        for r, (j, coefs) in enumerate(rows):
            for s, c in coefs.items():
                if c != 0.0:
                    data[s][0].append(r)
                    data[s][1].append(pos[s][j])
                    data[s][2].append(c)
        ops = [
            sp.csr_matrix((v, (r, c)), shape=(len(rows), boundary[s].size))
            for s, (r, c, v) in enumerate(data)
        ]
        return DualFlavor("", ops, np.array([j for j, _ in rows], dtype=int))

    red_rows = [(j, {a: 1.0, b: -1.0}) for j, a, b in relations]
    topo.dual["redundant"] = signed_ops(red_rows)

    # spanning forest of each dof's relation graph, in relation order
    keep, forest = [], []
    parent = {}

    def find(x):
        while parent.get(x, x) != x:
            x = parent[x]
        return x

    for r, (j, a, b) in enumerate(relations):
        ra, rb = find((j, a)), find((j, b))
        if ra != rb:
            parent[ra] = rb
            keep.append((j, a, b))
            forest.append(r)
    topo.forest = np.array(forest, dtype=int)
    nr_rows = [(j, {a: 1.0, b: -1.0}) for j, a, b in keep]
    topo.dual["nonredundant"] = signed_ops(nr_rows)

    # modified Gram-Schmidt of the non-redundant rows of each dof
    orth_rows = [None] * len(nr_rows)
    by_dof = {}
    for r, (j, _) in enumerate(nr_rows):
        by_dof.setdefault(j, []).append(r)
    for j, rows in by_dof.items():
        o = owners[j]
        basis = []
        for r in rows:
            v = np.array([nr_rows[r][1].get(s, 0.0) for s in o])
            for q in basis:
                v = v - (q @ v) * q
            v = v / np.linalg.norm(v)
            basis.append(v)
            orth_rows[r] = (j, {s: c for s, c in zip(o, v) if abs(c) > 1e-15})
    topo.dual["orthonormal"] = signed_ops(orth_rows)
    for name in FLAVORS:
        topo.dual[name].name = name
    return topo


# ---------------------------------------------------------------------------
# Scalings


@dataclass
class ScalingSet:
    kind: str
    weights: list  # M^(s): diagonal weight per boundary dof
    Ap_tilde: list  # A_p^(s) diag(M^(s))
    Ad_tilde: dict  # flavor -> per-subdomain scaled dual assembly

    def dual(self, flavor: str = "redundant") -> list:
        return self.Ad_tilde[flavor]


def stiffness_coefficients(problem, topo: InterfaceTopology) -> list:
    """diag(K_bb) per subdomain; the stiffness-scaling raw coefficients."""
    out = []
    for s, sub in enumerate(problem.subdomains):
        d = sub.K.diagonal()[topo.boundary[s]]
        if np.any(d <= 0):
            bad = topo.bprimal[s][d <= 0]
            raise ValueError(f"subdomain {s}: non-positive stiffness on interface dofs {bad.tolist()}")
        out.append(np.asarray(d, dtype=float))
    return out


def build_scaling(topo: InterfaceTopology, problem=None, kind: str = "multiplicity",
                  coefficients: Optional[list] = None) -> ScalingSet:
    """Primal weights M^(s) and the complementary scaled dual operators.

    ``coefficients`` overrides diag(K_bb) for the stiffness kind.
    """
    if kind not in SCALING_KINDS:
        raise ValueError(f"unknown scaling kind {kind!r}")
    n_sub = topo.n_sub
    if kind == "multiplicity":
        coef = [np.ones(topo.n_b(s)) for s in range(n_sub)]
    else:
        coef = coefficients if coefficients is not None else stiffness_coefficients(problem, topo)
    total = assemble(topo.A_p, coef)
    weights = [c / total[topo.bprimal[s]] for s, c in enumerate(coef)]
    Ap_tilde = [A @ sp.diags(w) for A, w in zip(topo.A_p, weights)]

    # full weight table w[j][s] for the dual formulas
    wtab = [dict() for _ in range(topo.n_primal)]
    for s in range(n_sub):
        for j, w in zip(topo.bprimal[s], weights[s]):
            wtab[j][s] = w

    Ad_tilde = {}
    for name, flav in topo.dual.items():
        if name == "redundant":
            # neighbour convention: the row of pair (s, r) is weighted by r's share
            new = []
            for s in range(n_sub):
                A = flav.ops[s].tocoo()
                vals = A.data.copy()
                for k, (r, c) in enumerate(zip(A.row, A.col)):
                    j, a, b = topo.relations[r]
                    other = b if s == a else a
                    vals[k] *= wtab[j][other]
                new.append(sp.csr_matrix((vals, (A.row, A.col)), shape=A.shape))
            Ad_tilde[name] = new
        else:
            Ad_tilde[name] = _exact_dual_scaling(topo, flav, wtab)
    return ScalingSet(kind=kind, weights=weights, Ap_tilde=Ap_tilde, Ad_tilde=Ad_tilde)


def _exact_dual_scaling(topo, flav: DualFlavor, wtab) -> list:
    """(A D Aᵀ)⁻¹ A D with D = diag(1/w), evaluated dof by dof.

    The rows of A span the complement of the ones vector, which gives the
    weight-free form (A Aᵀ)⁻¹ A (I − w 1ᵀ); it stays exact at high contrast.
    """
    n_sub = topo.n_sub
    rows_of = {}
    for r, j in enumerate(flav.row_primal):
        rows_of.setdefault(int(j), []).append(r)
    dense = [flav.ops[s].tocsc() for s in range(n_sub)]
    trip = [([], [], []) for _ in range(n_sub)]
    for j, rows in rows_of.items():
        o = topo.owners[j]
        A = np.zeros((len(rows), o.size))
        for k, s in enumerate(o):
            p = topo.local_position(s, j)
            A[:, k] = dense[s][rows, p].toarray().ravel()
        w = np.array([wtab[j][s] for s in o])
        X = np.linalg.solve(A @ A.T, A)
        At = X - np.outer(X @ w, np.ones(o.size))
        for k, s in enumerate(o):
            p = topo.local_position(s, j)
            for i, r in enumerate(rows):
                if At[i, k] != 0.0:
                    trip[s][0].append(r)
                    trip[s][1].append(p)
                    trip[s][2].append(At[i, k])
    return [
        sp.csr_matrix((v, (r, c)), shape=flav.ops[s].shape) for s, (r, c, v) in enumerate(trip)
    ]


def dump_operator_csv(ops: Sequence, path) -> None:
    """Write per-subdomain operators as dense CSV blocks, for fixture comparison."""
    with open(path, "w") as fh:
        for s, A in enumerate(ops):
            fh.write(f"# subdomain {s}\n")
            np.savetxt(fh, A.toarray(), delimiter=",", fmt="%.17g")
