"""Optional constraints: corner sets and corner augmentation matrices."""
from __future__ import annotations

import numpy as np


def corner_primal_dofs(problem) -> np.ndarray:
    """Mask of primal dofs sitting on subdomain vertices (crosspoints and edge ends)."""
    topo = problem.topology
    if topo.primal_node is None:
        return topo.multiplicity >= 3
    verts = np.fromiter(problem.vertex_nodes, dtype=int)
    return np.isin(topo.primal_node, verts)


def dual_corner_columns(ctx) -> np.ndarray:
    """Unit columns on dual rows at crosspoints: m−1 per m-multiple dof."""
    topo = ctx.topo
    rows = np.flatnonzero(np.isin(topo.dual[ctx.flavor].row_primal, topo.crosspoints))
    if ctx.flavor == "redundant":
        rows = np.intersect1d(rows, topo.forest)
    C = np.zeros((ctx.n_d, rows.size))
    C[rows, np.arange(rows.size)] = 1.0
    return C


def primal_corner_columns(ctx) -> np.ndarray:
    """C = Ã_p S_d C̃ with C̃ the scaled unit vectors at crosspoints: m columns per m-multiple dof.

    For floating subdomains the columns depend on the K⁺ representative.
    """
    topo = ctx.topo
    cols = []
    for j in topo.crosspoints:
        for s in topo.owners[j]:
            k = topo.local_position(s, j)
            o = ctx.ops[s]
            v = np.zeros(o.nb)
            v[k] = ctx.scaling.weights[s][k]
            cols.append(ctx.At_p[s] @ o.schur_dual_apply(v, check=False))
    return np.column_stack(cols) if cols else np.zeros((ctx.n_p, 0))


def corner_constraint_matrix(ctx, side: str) -> np.ndarray:
    if side == "primal":
        return primal_corner_columns(ctx)
    if side == "dual":
        return dual_corner_columns(ctx)
    raise ValueError(f"side must be 'primal' or 'dual', got {side!r}")
