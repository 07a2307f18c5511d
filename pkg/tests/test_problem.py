import dataclasses

import numpy as np
import pytest

from ddlab.local_ops import detect_rbm
from ddlab.methods import MethodConfig, solve
from ddlab.problem import (
    ProblemSpec, assemble_global, build_problem, global_residual, oracle_solve, q1_stiffness,
)
from fixtures import bar_spec, problem, sq_spec


def test_bar_fixture_layout(bar):
    assert bar.n_global == 4  # five nodes, the left one clamped
    assert [s.n for s in bar.subdomains] == [2, 3]
    R = detect_rbm(bar.subdomains[1])
    assert R.shape == (3, 1)
    np.testing.assert_allclose(np.abs(R[:, 0]), np.ones(3) / np.sqrt(3), atol=1e-14)
    assert detect_rbm(bar.subdomains[0]).shape[1] == 0


def test_bar_assembly_by_hand(bar):
    K, f = assemble_global(bar)
    expected = np.array([[2, -1, 0, 0], [-1, 2, -1, 0], [0, -1, 2, -1], [0, 0, -1, 1]], dtype=float)
    np.testing.assert_array_equal(K.toarray(), bar.spec.young * expected)
    np.testing.assert_array_equal(f, [0, 0, 0, 1])


def test_bar_oracle_by_hand(bar):
    u = oracle_solve(bar) * bar.spec.young
    np.testing.assert_allclose(u, [1, 2, 3, 4], rtol=1e-12)


def test_single_element_square():
    p = build_problem(ProblemSpec(kind="square2d", px=1, py=1, mx=1, my=1))
    K, _ = assemble_global(p)
    assert K.shape == (4, 4)
    assert np.all(np.linalg.eigvalsh(K.toarray()) > 0)
    Ke = q1_stiffness(1.0, 1.0, 200000.0, 0.3)
    free = [2, 3, 4, 5]  # nodes (1,0) and (1,1) in element order
    np.testing.assert_allclose(K.toarray(), Ke[np.ix_(free, free)], rtol=1e-14)


@pytest.mark.parametrize("spec", [bar_spec(3, 2), sq_spec(2, 3), sq_spec(3, 2)])
def test_assembly_exactly_symmetric(spec):
    K, _ = assemble_global(build_problem(spec))
    assert (K - K.T).count_nonzero() == 0


def test_zero_load_gives_zero_displacement():
    p = build_problem(dataclasses.replace(sq_spec(2, 2), load_magnitude=0.0))
    np.testing.assert_array_equal(oracle_solve(p), 0.0)


@pytest.mark.parametrize("spec", [sq_spec(2, 4), sq_spec(4, 8), bar_spec(4, 3)])
def test_oracle_relative_residual(spec):
    p = problem(spec)
    u = oracle_solve(p)
    assert global_residual(p, u) <= 1e-12


def test_oracle_matches_bdd(sq22):
    u, _ = solve(sq22, MethodConfig(method="bdd", tol=1e-10))
    ref = oracle_solve(sq22)
    assert np.linalg.norm(u - ref) <= 1e-6 * np.linalg.norm(ref)


def test_subdomain_energies_add_up(sq33):
    rng = np.random.default_rng(0)
    K, _ = assemble_global(sq33)
    u = rng.standard_normal(sq33.n_global)
    local = sum(u[s.global_dofs] @ (s.K @ u[s.global_dofs]) for s in sq33.subdomains)
    assert abs(local - u @ (K @ u)) <= 1e-12 * abs(u @ (K @ u))


def test_kernel_dimensions(sq33):
    dims = [detect_rbm(s).shape[1] for s in sq33.subdomains]
    # clamp on the left edge: the first column of subdomains is fixed, the rest float
    assert dims == [0, 3, 3] * 3


@pytest.mark.parametrize("p,m", [(1, 1), (2, 3), (4, 16)])
def test_dof_count(p, m):
    prob = build_problem(sq_spec(p, m))
    clamped = 2 * (p * m + 1)
    assert prob.n_global == (p * m + 1) ** 2 * 2 - clamped
    assert prob.n_subdomains == p * p


def test_corner_load_on_top_right():
    p = build_problem(sq_spec(2, 2))
    nz = np.flatnonzero(p.f_global)
    assert nz.size == 2
    node = p.global_dof_node[nz[0]]
    assert node == (4 + 1) ** 2 - 1
    np.testing.assert_array_equal(p.f_global[nz], [1.0, 1.0])


@pytest.mark.parametrize("kw,msg", [
    (dict(px=0), "px"),
    (dict(mx=0), "mx"),
    (dict(poisson=0.5), "Poisson"),
    (dict(young=-1.0), "Young"),
    (dict(young_pair=(1.0, 2.0), cell=3), "cell"),
    (dict(kind="cube"), "kind"),
])
def test_spec_rejections(kw, msg):
    spec = dataclasses.replace(sq_spec(2, 4), **kw)
    with pytest.raises(ValueError, match=msg):
        build_problem(spec)


def test_spec_json_round_trip():
    spec = ProblemSpec(kind="square2d", px=3, py=2, mx=4, my=4, young_pair=(5.0, 1.0), cell=2)
    assert ProblemSpec.from_json(spec.to_json()) == spec
    with pytest.raises(ValueError, match="unknown"):
        ProblemSpec.from_dict({"kind": "bar1d", "bogus": 1})


def test_checkerboard_moduli():
    p = build_problem(ProblemSpec(kind="square2d", px=2, py=2, mx=2, my=2, young_pair=(10.0, 1.0), cell=2))
    diag = [s.K.diagonal().max() for s in p.subdomains]
    # cells coincide with subdomains: stiff, soft, soft, stiff
    assert diag[0] == pytest.approx(10 * diag[1]) and diag[3] == pytest.approx(10 * diag[2])
