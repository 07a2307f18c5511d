import numpy as np
import scipy.sparse as sp
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from ddlab.interface import FLAVORS, build_scaling, topology_from_maps
from ddlab.krylov import KrylovConfig, cg, gmres, make_admissibility_projector
from ddlab.problem import ProblemSpec, assemble_global, build_problem

FAST = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def topologies(draw):
    """Random subdomain ownership of a few interface dofs, every dof shared by 2 to 4 subdomains."""
    n_sub = draw(st.integers(2, 5))
    n_primal = draw(st.integers(1, 6))
    owners = []
    for _ in range(n_primal):
        k = draw(st.integers(2, min(4, n_sub)))
        owners.append(sorted(draw(st.permutations(range(n_sub)))[:k]))
    boundary, bprimal, n_local = [], [], []
    for s in range(n_sub):
        mine = [j for j, o in enumerate(owners) if s in o]
        n_int = draw(st.integers(0, 2))
        order = draw(st.permutations(mine))
        bprimal.append(list(order))
        boundary.append(list(range(n_int, n_int + len(order))))
        n_local.append(n_int + len(order))
    coef = [np.array(draw(st.lists(st.floats(0.1, 1e3), min_size=len(b), max_size=len(b)))) for b in bprimal]
    return topology_from_maps(n_local, boundary, bprimal, n_primal), coef


def block(ops):
    return sp.hstack(ops).toarray()


@FAST
@given(topologies())
def test_random_topology_identities(data):
    topo, coef = data
    Ap = block(topo.A_p)
    np.testing.assert_array_equal(Ap @ Ap.T, np.diag(topo.multiplicity))
    for flavor in FLAVORS:
        Ad = block(topo.ops("dual", flavor))
        np.testing.assert_allclose(Ad @ Ap.T, 0.0, atol=1e-14)
        assert np.linalg.matrix_rank(Ad) == Ap.shape[1] - topo.n_primal


@FAST
@given(topologies(), st.sampled_from(["multiplicity", "stiffness"]))
def test_random_topology_complementarity(data, kind):
    topo, coef = data
    sc = build_scaling(topo, kind=kind, coefficients=coef)
    Ap, At = block(topo.A_p), block(sc.Ap_tilde)
    np.testing.assert_allclose(At @ Ap.T, np.eye(topo.n_primal), atol=1e-13)
    eye = np.eye(Ap.shape[1])
    for flavor in FLAVORS:
        Ad, Dt = block(topo.ops("dual", flavor)), block(sc.dual(flavor))
        np.testing.assert_allclose(At.T @ Ap + Ad.T @ Dt, eye, atol=1e-12)
        np.testing.assert_allclose(Ap.T @ At + Dt.T @ Ad, eye, atol=1e-12)


@st.composite
def spd_systems(draw):
    n = draw(st.integers(1, 12))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.geomspace(1.0, draw(st.floats(1.0, 1e3)), n)
    return q @ np.diag(lam) @ q.T, rng.standard_normal(n)


@FAST
@given(spd_systems())
def test_cg_terminates_within_dimension(system):
    A, b = system
    res = cg(A, b, config=KrylovConfig(tol=1e-10))
    assert res.converged and res.iterations <= A.shape[0] + 1
    assert np.linalg.norm(A @ res.x - b) <= 1e-8 * np.linalg.norm(b)


@FAST
@given(spd_systems(), st.floats(-3.0, 3.0))
def test_gmres_linear_in_rhs(system, c):
    A, b = system
    cfg = KrylovConfig(tol=1e-12)
    x1 = gmres(A, b, config=cfg).x
    x2 = gmres(A, c * b, config=cfg).x
    np.testing.assert_allclose(x2, c * x1, atol=1e-9 * max(1.0, abs(c)) * np.linalg.norm(x1))


@FAST
@given(st.integers(2, 15), st.integers(1, 4), st.integers(0, 2**31))
def test_projector_idempotent_and_admissible(n, k, seed):
    k = min(k, n - 1)
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, k))
    e = rng.standard_normal(k)
    pr = make_admissibility_projector(G, e)
    P = np.column_stack([pr.P(v) for v in np.eye(n)])
    np.testing.assert_allclose(P @ P, P, atol=1e-9)
    np.testing.assert_allclose(G.T @ P, 0.0, atol=1e-9)
    np.testing.assert_allclose(G.T @ pr.x0, e, atol=1e-9 * max(1.0, np.abs(e).max()))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.floats(0.0, 0.45), st.integers(0, 2**31))
def test_random_square_assembly(px, py, m, nu, seed):
    p = build_problem(ProblemSpec(kind="square2d", px=px, py=py, mx=m, my=m, poisson=nu))
    K, _ = assemble_global(p)
    assert (K - K.T).count_nonzero() == 0
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(p.n_global)
    glob = u @ (K @ u)
    loc = sum(u[s.global_dofs] @ (s.K @ u[s.global_dofs]) for s in p.subdomains)
    assert glob > 0
    assert abs(loc - glob) <= 1e-12 * glob
