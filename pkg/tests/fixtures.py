"""Shared problem fixtures and the three-subdomain hand-numbered topology."""
from __future__ import annotations

import numpy as np

from ddlab.interface import topology_from_maps
from ddlab.problem import ProblemSpec, build_problem

EPS = 1e-6

# Three subdomains, 1 dof per node: 5, 5 and 4 local dofs, 4 interface dofs.
F3_N_LOCAL = [5, 5, 4]
F3_BOUNDARY = [[2, 3, 4], [2, 3, 4], [0, 1, 2]]
F3_BPRIMAL = [[2, 1, 3], [0, 3, 1], [2, 3, 0]]
F3_RELATIONS = [(0, 1, 2), (1, 0, 1), (2, 0, 2), (3, 1, 2), (3, 0, 1), (3, 0, 2)]

S2, S6 = 1 / np.sqrt(2), 1 / np.sqrt(6)
F3_TRACE = [
    [[0, 0, 1, 0, 0], [0, 0, 0, 1, 0], [0, 0, 0, 0, 1]],
    [[0, 0, 1, 0, 0], [0, 0, 0, 1, 0], [0, 0, 0, 0, 1]],
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]],
]
F3_AP = [
    [[0, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 1]],
    [[1, 0, 0], [0, 0, 1], [0, 0, 0], [0, 1, 0]],
    [[0, 0, 1], [0, 0, 0], [1, 0, 0], [0, 1, 0]],
]
F3_AD = [
    [[0, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 0], [0, 0, 1], [0, 0, 1]],
    [[1, 0, 0], [0, 0, -1], [0, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 0]],
    [[0, 0, -1], [0, 0, 0], [-1, 0, 0], [0, -1, 0], [0, 0, 0], [0, -1, 0]],
]
F3_AN = [a[:5] for a in F3_AD]
F3_AO = [
    [[0, 0, 0], [0, S2, 0], [S2, 0, 0], [0, 0, 0], [0, 0, 2 * S6]],
    [[S2, 0, 0], [0, 0, -S2], [0, 0, 0], [0, S2, 0], [0, -S6, 0]],
    [[0, 0, -S2], [0, 0, 0], [-S2, 0, 0], [0, -S2, 0], [0, -S6, 0]],
]


def f3_topology():
    return topology_from_maps(F3_N_LOCAL, F3_BOUNDARY, F3_BPRIMAL, 4, relations=F3_RELATIONS)


def bar_spec(px=2, mx=2):
    return ProblemSpec(kind="bar1d", px=px, py=1, mx=mx, my=1)


def sq_spec(p=2, m=4, **kw):
    return ProblemSpec(kind="square2d", px=p, py=p, mx=m, my=m, **kw)


def het_spec(p=4, m=8, cell=4):
    """Checkerboard of half-subdomain cells, moduli ratio 1e5."""
    return ProblemSpec(kind="square2d", px=p, py=p, mx=m, my=m, young_pair=(200000.0, 2.0), cell=cell)


_CACHE = {}


def problem(spec):
    key = spec.to_json()
    if key not in _CACHE:
        _CACHE[key] = build_problem(spec)
    return _CACHE[key]


def oracle_fixtures():
    """The four oracle-equivalence fixtures: (name, problem, extra config for heterogeneous cases)."""
    return [
        ("bar", problem(bar_spec()), {}),
        ("SQ(2x2,m=4)", problem(sq_spec(2, 4)), {}),
        ("SQ(4x4,m=8)", problem(sq_spec(4, 8)), {}),
        ("HET(4x4,m=8)", problem(het_spec()), {"scaling": "stiffness", "projector_Q": "superlumped"}),
    ]


_RUNS = {}


def run(spec, **kw):
    """Cached solve of one method on one generated problem; returns (u, report)."""
    from ddlab.methods import MethodConfig, solve

    key = (spec.to_json(), tuple(sorted(kw.items())))
    if key not in _RUNS:
        _RUNS[key] = solve(problem(spec), MethodConfig(**kw))
    return _RUNS[key]


def history_gap(a, b) -> float:
    """Largest gap between two relative residual histories, on their common length."""
    a, b = np.asarray(a.history), np.asarray(b.history)
    n = min(a.size, b.size)
    return float(np.max(np.abs(a[:n] - b[:n])))
