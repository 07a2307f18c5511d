"""Structured decomposed model problems and the direct-solve oracle.

Two generators are provided:

* ``square2d``: a plane-stress square made of ``px x py`` square subdomains,
  each meshed with ``mx x my`` bilinear (Q1) elements, clamped on the left
  edge and loaded by a point force on the top-right corner.
* ``bar1d``: a chain of unit springs split into ``px`` subdomains of ``mx``
  springs, clamped on the left end and pulled at the right end.

Dirichlet dofs are removed before anything else sees the matrices, so every
subdomain stiffness and the assembled global matrix only carry free dofs.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

KINDS = ("square2d", "bar1d")


@dataclass
class ProblemSpec:
    kind: str = "square2d"
    px: int = 1
    py: int = 1
    mx: int = 1
    my: int = 1
    young: float = 200000.0
    # checkerboard heterogeneity: (E1, E2) alternating on cells of `cell` elements
    young_pair: Optional[tuple] = None
    cell: Optional[int] = None
    poisson: float = 0.3
    load_magnitude: float = 1.0
    load_direction: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.young_pair is not None:
            self.young_pair = tuple(float(v) for v in self.young_pair)
        self.load_direction = tuple(float(v) for v in self.load_direction)

    @property
    def dofs_per_node(self) -> int:
        return 2 if self.kind == "square2d" else 1

    @property
    def n_subdomains(self) -> int:
        return self.px * self.py

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        for name in ("px", "py", "mx", "my"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1 (a subdomain would have zero elements)")
        if self.kind == "bar1d" and (self.py != 1 or self.my != 1):
            raise ValueError("bar1d problems are one-dimensional: py = my = 1")
        moduli = self.young_pair if self.young_pair is not None else (self.young,)
        if min(moduli) <= 0:
            raise ValueError("Young modulus must be positive")
        if not -1.0 < self.poisson < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")
        if self.young_pair is not None:
            if len(self.young_pair) != 2:
                raise ValueError("young_pair must hold two moduli")
            cell = self.cell or self.mx
            nx, ny = self.px * self.mx, self.py * self.my
            if nx % cell or (self.kind == "square2d" and ny % cell):
                raise ValueError(f"heterogeneity cell {cell} does not divide the {nx}x{ny} element grid")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.young_pair is None:
            d.pop("young_pair")
            d.pop("cell")
        else:
            d["young_pair"] = list(self.young_pair)
        d["load_direction"] = list(self.load_direction)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown problem fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        return cls.from_dict(json.loads(text))

    def label(self) -> str:
        if self.kind == "bar1d":
            return f"BAR({self.px},m={self.mx})"
        tag = "HET" if self.young_pair is not None else "SQ"
        return f"{tag}({self.px}x{self.py},m={self.mx})"


@dataclass
class Subdomain:
    """One substructure: stiffness and load on its free dofs plus geometry.

    ``coords``/``node_ids`` cover every local node (clamped ones included) so the
    geometric rigid-body detector can see the Dirichlet conditions;
    ``dirichlet`` lists the clamped entries of the full ``node*dpn+comp`` local
    numbering and ``free`` the surviving ones, in the order used by ``K``.
    """

    index: int
    K: sp.csr_matrix
    f: np.ndarray
    coords: np.ndarray
    node_ids: np.ndarray
    dofs_per_node: int
    free: np.ndarray
    dirichlet: np.ndarray
    global_dofs: np.ndarray

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def dof_node(self) -> np.ndarray:
        """Local node index of every free dof."""
        return self.free // self.dofs_per_node

    @property
    def dof_component(self) -> np.ndarray:
        return self.free % self.dofs_per_node


@dataclass
class DecomposedProblem:
    spec: ProblemSpec
    subdomains: list
    n_global: int
    f_global: np.ndarray
    # global free dof -> (global node id, component)
    global_dof_node: np.ndarray
    global_dof_component: np.ndarray
    # global node ids sitting on a vertex of the subdomain grid
    vertex_nodes: frozenset
    topology: object = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    @property
    def dofs_per_node(self) -> int:
        return self.spec.dofs_per_node


def plane_stress_matrix(young: float, poisson: float) -> np.ndarray:
    c = young / (1.0 - poisson**2)
    return c * np.array([[1.0, poisson, 0.0], [poisson, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - poisson)]])


def q1_stiffness(hx: float, hy: float, young: float, poisson: float) -> np.ndarray:
    """8x8 stiffness of an axis-aligned hx*hy bilinear element, 2x2 Gauss rule.

    Nodes are ordered (0,0), (1,0), (1,1), (0,1); dofs interleave (u, v).
    """
    D = plane_stress_matrix(young, poisson)
    xi_n = np.array([-1.0, 1.0, 1.0, -1.0])
    eta_n = np.array([-1.0, -1.0, 1.0, 1.0])
    g = 1.0 / np.sqrt(3.0)
    Ke = np.zeros((8, 8))
    for xi in (-g, g):
        for eta in (-g, g):
            dN_dxi = 0.25 * xi_n * (1.0 + eta * eta_n)
            dN_deta = 0.25 * eta_n * (1.0 + xi * xi_n)
            dN_dx = dN_dxi * 2.0 / hx
            dN_dy = dN_deta * 2.0 / hy
            B = np.zeros((3, 8))
            B[0, 0::2] = dN_dx
            B[1, 1::2] = dN_dy
            B[2, 0::2] = dN_dy
            B[2, 1::2] = dN_dx
            Ke += B.T @ D @ B * (hx * hy / 4.0)
    return Ke


def element_moduli(spec: ProblemSpec) -> np.ndarray:
    """Young modulus of every element, indexed [ey, ex] (bar1d: [0, ex])."""
    nx = spec.px * spec.mx
    ny = spec.py * spec.my if spec.kind == "square2d" else 1
    if spec.young_pair is None:
        return np.full((ny, nx), float(spec.young))
    cell = spec.cell or spec.mx
    ex = np.arange(nx) // cell
    ey = np.arange(ny) // cell
    parity = (ey[:, None] + ex[None, :]) % 2
    e1, e2 = spec.young_pair
    return np.where(parity == 0, e1, e2)


def build_problem(spec: ProblemSpec) -> DecomposedProblem:
    """Generate the decomposed problem and its interface topology."""
    from .interface import build_topology

    spec.validate()
    if spec.kind == "square2d":
        problem = _build_square(spec)
    else:
        problem = _build_bar(spec)
    problem.topology = build_topology(problem)
    return problem


def _assemble_free(n_free, elements, free_index):
    rows, cols, vals = [], [], []
    for dofs, Ke in elements:
        loc = free_index[dofs]
        keep = loc >= 0
        li = loc[keep]
        block = Ke[np.ix_(keep, keep)]
        rows.append(np.repeat(li, li.size))
        cols.append(np.tile(li, li.size))
        vals.append(block.ravel())
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n_free, n_free)).tocsr()
    K.sum_duplicates()
    # exact symmetry; summation order can differ between (i,j) and (j,i)
    return ((K + K.T) * 0.5).tocsr()


def _build_square(spec: ProblemSpec) -> DecomposedProblem:
    nx, ny = spec.px * spec.mx, spec.py * spec.my
    hx, hy = 1.0 / spec.mx, 1.0 / spec.my
    moduli = element_moduli(spec)
    K_unit = q1_stiffness(hx, hy, 1.0, spec.poisson)

    n_nodes = (nx + 1) * (ny + 1)
    node_id = lambda ix, iy: iy * (nx + 1) + ix
    clamped = np.zeros(2 * n_nodes, dtype=bool)
    for iy in range(ny + 1):
        clamped[2 * node_id(0, iy):2 * node_id(0, iy) + 2] = True
    gfree = np.flatnonzero(~clamped)
    gindex = -np.ones(2 * n_nodes, dtype=int)
    gindex[gfree] = np.arange(gfree.size)

    f_full = np.zeros(2 * n_nodes)
    corner = node_id(nx, ny)
    f_full[2 * corner:2 * corner + 2] = spec.load_magnitude * np.asarray(spec.load_direction)
    f_global = f_full[gfree]

    vertex_nodes = frozenset(
        node_id(ix, iy) for ix in range(0, nx + 1, spec.mx) for iy in range(0, ny + 1, spec.my)
    )

    subdomains = []
    for sy in range(spec.py):
        for sx in range(spec.px):
            ixs = np.arange(sx * spec.mx, (sx + 1) * spec.mx + 1)
            iys = np.arange(sy * spec.my, (sy + 1) * spec.my + 1)
            nlx = ixs.size
            gnodes = np.array([node_id(ix, iy) for iy in iys for ix in ixs])
            coords = np.array([[ix * hx, iy * hy] for iy in iys for ix in ixs])
            full_g = np.column_stack([2 * gnodes, 2 * gnodes + 1]).ravel()
            local_clamped = clamped[full_g]
            free = np.flatnonzero(~local_clamped)
            findex = -np.ones(full_g.size, dtype=int)
            findex[free] = np.arange(free.size)
            elements = []
            for ey in range(spec.my):
                for ex in range(spec.mx):
                    n0 = ey * nlx + ex
                    enodes = np.array([n0, n0 + 1, n0 + 1 + nlx, n0 + nlx])
                    edofs = np.column_stack([2 * enodes, 2 * enodes + 1]).ravel()
                    E = moduli[sy * spec.my + ey, sx * spec.mx + ex]
                    elements.append((edofs, E * K_unit))
            K = _assemble_free(free.size, elements, findex)
            f = np.zeros(free.size)
            gdofs = gindex[full_g[free]]
            # the point load belongs to the subdomain owning the corner element only
            if sx == spec.px - 1 and sy == spec.py - 1:
                f = f_full[full_g[free]].copy()
            subdomains.append(
                Subdomain(
                    index=len(subdomains), K=K, f=f, coords=coords, node_ids=gnodes,
                    dofs_per_node=2, free=free, dirichlet=np.flatnonzero(local_clamped),
                    global_dofs=gdofs,
                )
            )
    comp = gfree % 2
    return DecomposedProblem(
        spec=spec, subdomains=subdomains, n_global=gfree.size, f_global=f_global,
        global_dof_node=gfree // 2, global_dof_component=comp, vertex_nodes=vertex_nodes,
    )


def _build_bar(spec: ProblemSpec) -> DecomposedProblem:
    nx = spec.px * spec.mx
    moduli = element_moduli(spec)[0]
    n_nodes = nx + 1
    gindex = np.arange(n_nodes) - 1  # node 0 is clamped
    f_global = np.zeros(nx)
    f_global[-1] = spec.load_magnitude
    subdomains = []
    for s in range(spec.px):
        gnodes = np.arange(s * spec.mx, (s + 1) * spec.mx + 1)
        coords = np.column_stack([gnodes / spec.mx, np.zeros(gnodes.size)])
        local_clamped = gnodes == 0
        free = np.flatnonzero(~local_clamped)
        findex = -np.ones(gnodes.size, dtype=int)
        findex[free] = np.arange(free.size)
        k1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
        elements = [(np.array([e, e + 1]), moduli[s * spec.mx + e] * k1) for e in range(spec.mx)]
        K = _assemble_free(free.size, elements, findex)
        f = np.zeros(free.size)
        if s == spec.px - 1:
            f[-1] = spec.load_magnitude
        subdomains.append(
            Subdomain(
                index=s, K=K, f=f, coords=coords, node_ids=gnodes, dofs_per_node=1, free=free,
                dirichlet=np.flatnonzero(local_clamped), global_dofs=gindex[gnodes[free]],
            )
        )
    vertex_nodes = frozenset(range(0, n_nodes, spec.mx))
    return DecomposedProblem(
        spec=spec, subdomains=subdomains, n_global=nx, f_global=f_global,
        global_dof_node=np.arange(1, n_nodes), global_dof_component=np.zeros(nx, dtype=int),
        vertex_nodes=vertex_nodes,
    )


def assemble_global(problem: DecomposedProblem):
    """Global (K, f) obtained by scattering every subdomain through its dof map."""
    n = problem.n_global
    K = sp.csr_matrix((n, n))
    for sub in problem.subdomains:
        g = sub.global_dofs
        coo = sub.K.tocoo()
        K = K + sp.csr_matrix((coo.data, (g[coo.row], g[coo.col])), shape=(n, n))
    f = np.zeros(n)
    for sub in problem.subdomains:
        np.add.at(f, sub.global_dofs, sub.f)
    return K.tocsr(), f


def oracle_solve(problem: DecomposedProblem) -> np.ndarray:
    """Reference displacement from a direct factorization of the assembled system."""
    if "oracle" in problem.cache:
        return problem.cache["oracle"]
    K, f = assemble_global(problem)
    if not np.any(f):
        u = np.zeros_like(f)
    else:
        if K.shape[0] <= 3000:
            try:
                c = sla.cho_factor(K.toarray())
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError("global stiffness is not SPD: assembly bug") from exc
            solve = lambda y: sla.cho_solve(c, y)
        else:
            solve = splu(K.tocsc()).solve
        u = solve(f)
        # iterative refinement for high-contrast moduli
        for _ in range(3):
            r = f - K @ u
            if np.linalg.norm(r) <= 1e-14 * np.linalg.norm(f):
                break
            u = u + solve(r)
    # normwise backward error: the relative residual itself is floored by cond(K) on high contrasts
    r = np.linalg.norm(K @ u - f)
    scale = abs(K).sum(axis=0).max() * np.linalg.norm(u) + np.linalg.norm(f)
    if np.any(f) and r > 1e-12 * scale:
        raise np.linalg.LinAlgError(f"oracle backward error {r / scale:.2e} above 1e-12")
    problem.cache["oracle"] = u
    return u


def global_residual(problem: DecomposedProblem, u: np.ndarray) -> float:
    """||K u - f|| / ||f|| on the assembled system."""
    if "assembled" not in problem.cache:
        problem.cache["assembled"] = assemble_global(problem)
    K, f = problem.cache["assembled"]
    nf = np.linalg.norm(f)
    r = np.linalg.norm(K @ u - f)
    return r / nf if nf > 0 else r
