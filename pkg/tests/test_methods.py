from types import SimpleNamespace

import numpy as np
import pytest

from ddlab.interface import build_scaling
from ddlab.krylov import explicit_matrix
from ddlab.methods import Context, MethodConfig, SolverReport, solve
from ddlab.methods.constraints import corner_primal_dofs, dual_corner_columns, primal_corner_columns
from ddlab.methods.dp import build_change_of_basis, householder_average, transformed_problem
from ddlab.methods.dual import DualSetup, jump_blocks
from ddlab.methods.primal import solve_bddc
from ddlab.methods.dp import solve_fetidp
from ddlab.problem import ProblemSpec, assemble_global, build_problem, oracle_solve
from fixtures import EPS, f3_topology, het_spec, history_gap, problem, run, sq_spec


def band_spec(px=3, m=4):
    return ProblemSpec(kind="square2d", px=px, py=1, mx=m, my=m)


# -- small closed-form cases --------------------------------------------------------

def test_bdd_on_the_bar(bar):
    u, rep = solve(bar, MethodConfig(method="bdd", tol=1e-12))
    assert rep.converged and rep.coarse == (0, 1)
    np.testing.assert_allclose(u * bar.spec.young, [1, 2, 3, 4], rtol=1e-10)


def test_feti_on_the_bar(bar):
    u, rep = solve(bar, MethodConfig(method="feti", tol=1e-12))
    lam = rep.extras["lambda"]
    # the unit tip load crosses the interface: one relation carrying a unit effort
    np.testing.assert_allclose(np.abs(lam), [1.0], rtol=1e-10)
    np.testing.assert_allclose(u * bar.spec.young, [1, 2, 3, 4], rtol=1e-10)


def test_single_subdomain_has_no_interface():
    p = build_problem(ProblemSpec(kind="square2d", px=1, py=1, mx=3, my=3))
    u, rep = solve(p, MethodConfig(method="bdd"))
    assert rep.iterations == 0 and rep.error_vs_oracle <= 1e-12


def test_no_floating_subdomain_means_no_admissibility():
    spec = ProblemSpec(kind="square2d", px=1, py=2, mx=4, my=4)
    for method in ("feti", "pfeti", "bdd"):
        u, rep = run(spec, method=method)
        assert rep.coarse == (0, 0)
        assert rep.converged and rep.error_vs_oracle <= 10 * EPS


def test_pfeti_identity_projector():
    u, rep = run(sq_spec(2, 8), method="pfeti", projector_Q="identity")
    assert rep.converged and rep.error_vs_oracle <= 10 * EPS


def test_afeti_equals_feti_without_crosspoints():
    # a band decomposition has no crosspoint, so every connectivity description is equivalent
    _, a = run(band_spec(), method="afeti", tol=1e-10)
    _, f = run(band_spec(), method="feti", tol=1e-10)
    assert a.iterations == f.iterations
    assert history_gap(a, f) <= 1e-9


def test_band_has_no_corner_columns():
    ctx = Context(problem(band_spec()))
    assert dual_corner_columns(ctx).shape[1] == 0
    assert primal_corner_columns(ctx).shape[1] == 0


# -- hybrid ---------------------------------------------------------------------------

def test_hybrid_coarse_smaller_than_bdd():
    _, rep = run(sq_spec(4, 16), method="hybrid", hybrid_split="D-P")
    assert rep.converged and rep.error_vs_oracle <= 10 * EPS
    assert sum(rep.coarse) < 36


@pytest.mark.parametrize("split", ["X-P", "D-P-P", "Q"])
def test_hybrid_bad_split(sq22, split):
    with pytest.raises(ValueError, match="bad hybrid split"):
        solve(sq22, MethodConfig(method="hybrid", hybrid_split=split))


@pytest.mark.parametrize("split", ["P-D", "D-P"])
def test_hybrid_mixed_splits_solve(sq22, split):
    u, rep = solve(sq22, MethodConfig(method="hybrid", hybrid_split=split))
    assert rep.converged and rep.error_vs_oracle <= 10 * EPS


# -- FETI-DP, BDDC and the change of basis ----------------------------------------------

def test_fetidp_close_to_feti(sq44):
    _, dp = solve(sq44, MethodConfig(method="fetidp"))
    _, fe = solve(sq44, MethodConfig(method="feti"))
    assert dp.converged and dp.iterations <= 2 * fe.iterations


def test_bddc_close_to_bdd(sq44):
    _, c = solve(sq44, MethodConfig(method="bddc"))
    _, b = solve(sq44, MethodConfig(method="bdd"))
    assert c.converged and c.iterations <= 2 * b.iterations


def test_fetidp_all_primal_is_direct():
    p = problem(ProblemSpec(kind="square2d", px=2, py=1, mx=4, my=4))
    u, rep = solve_fetidp(p, MethodConfig(method="fetidp"), pset=np.ones(p.topology.n_primal, dtype=bool))
    assert rep.iterations == 0
    assert np.linalg.norm(u - oracle_solve(p)) <= 1e-9 * np.linalg.norm(oracle_solve(p))


def test_bddc_all_primal_converges_at_once():
    p = problem(sq_spec(2, 4))
    u, rep = solve_bddc(p, MethodConfig(method="bddc"), pset=np.ones(p.topology.n_primal, dtype=bool))
    assert rep.converged and rep.iterations <= 2


def test_empty_primal_set_rejected(sq22):
    with pytest.raises(np.linalg.LinAlgError, match="zero-energy modes"):
        solve_fetidp(sq22, MethodConfig(method="fetidp"), pset=np.zeros(sq22.topology.n_primal, dtype=bool))


def test_bddc_preconditioner_symmetric(sq22):
    _, rep = solve(sq22, MethodConfig(method="bddc"))
    M = explicit_matrix(rep.extras["preconditioner"])
    assert np.abs(M - M.T).max() <= 1e-10 * np.abs(M).max()
    assert np.linalg.eigvalsh(0.5 * (M + M.T)).min() > -1e-10 * np.abs(M).max()


@pytest.mark.parametrize("k", [1, 2, 5])
def test_householder_average(k):
    H = householder_average(k)
    np.testing.assert_allclose(H @ H.T, np.eye(k), atol=1e-14)
    np.testing.assert_allclose(H[:, 0], np.ones(k) / np.sqrt(k), atol=1e-14)
    u = np.arange(1.0, k + 1)
    assert (H.T @ u)[0] == pytest.approx(np.sqrt(k) * u.mean())


def test_change_of_basis(sq33):
    cob = build_change_of_basis(sq33)
    hat = transformed_problem(sq33, cob)
    for s, (T, sub, hsub) in enumerate(zip(cob.T, sq33.subdomains, hat.subdomains)):
        Td = T.toarray()
        np.testing.assert_allclose(Td.T @ Td, np.eye(sub.n), atol=1e-14)
        np.testing.assert_allclose(np.linalg.eigvalsh(hsub.K.toarray()), np.linalg.eigvalsh(sub.K.toarray()),
                                   rtol=1e-9, atol=1e-9 * abs(sub.K).max())
    # both owners of an edge apply the same local transform
    topo = sq33.topology
    e = cob.edges[0]
    blocks = []
    for s in topo.owners[e[0]]:
        loc = [topo.boundary[s][topo.local_position(s, j)] for j in e]
        blocks.append(cob.T[s].toarray()[np.ix_(loc, loc)])
    np.testing.assert_array_equal(blocks[0], blocks[1])
    assert np.all(cob.pset >= corner_primal_dofs(sq33))


def test_edge_averages_help():
    spec = sq_spec(3, 8)
    _, corners = run(spec, method="fetidp")
    _, edges = run(spec, method="fetidp", fetidp_constraints="corners_plus_edge_averages")
    assert edges.converged and edges.error_vs_oracle <= 10 * EPS
    assert edges.iterations <= corners.iterations
    assert edges.coarse[1] > corners.coarse[1]


# -- mixed two-subdomain method ------------------------------------------------------------

def two_sub():
    return problem(ProblemSpec(kind="square2d", px=2, py=1, mx=4, my=4))


@pytest.mark.parametrize("T", ["neighbor_kbb", "neighbor_strip"])
def test_mixed_approximate_stiffness(T):
    u, rep = solve(two_sub(), MethodConfig(method="mixed2", mixed_T=T, strip_layers=2))
    assert rep.converged and rep.error_vs_oracle <= 10 * EPS


def test_mixed_zero_stiffness_rejected():
    with pytest.raises(np.linalg.LinAlgError, match="singular"):
        solve(two_sub(), MethodConfig(method="mixed2", mixed_T="zero"))


def test_mixed_needs_two_subdomains(sq22):
    with pytest.raises(ValueError, match="two subdomains"):
        solve(sq22, MethodConfig(method="mixed2"))


# -- residual bookkeeping -------------------------------------------------------------------

def test_global_residual_of_exact_solution(sq22):
    ctx = Context(sq22)
    assert ctx.true_residual(oracle_solve(sq22)) <= 1e-12


def test_feti_residual_is_the_jump():
    sq28 = problem(sq_spec(2, 8))
    ctx = Context(sq28)
    ds = DualSetup(ctx, "identity")
    gaps, ratios = [], []

    def cb(j, lam, r):
        jump = jump_blocks(ds, lam)
        gaps.append(np.linalg.norm(r + jump) / max(np.linalg.norm(r), 1e-300))
        u, _ = ds.reconstruct(lam)
        ratios.append(ctx.dual_global_residual(r) / ctx.true_residual(u))

    _, rep = solve(sq28, MethodConfig(method="feti"), callback=cb)
    assert rep.converged
    assert max(gaps) <= 1e-8
    assert all(0.2 <= q <= 5.0 for q in ratios)


def test_report_round_trip(sq22):
    _, rep = solve(sq22, MethodConfig(method="bdd"))
    back = SolverReport.from_dict(rep.to_dict())
    assert back.iterations == rep.iterations and back.coarse == rep.coarse
    assert back.error_vs_oracle == rep.error_vs_oracle
    rows = list(rep.history_rows())
    assert rows[0][2] == 1.0 and len(rows) == rep.iterations + 1
    assert rep.sc_label == "SC:0+6"  # two floating subdomains


# -- corner counting on the hand layout ---------------------------------------------------------

def f3_ctx(flavor):
    topo = f3_topology()
    sc = build_scaling(topo)
    ops = [SimpleNamespace(nb=topo.n_b(s), schur_dual_apply=lambda v, check=False: v) for s in range(3)]
    return SimpleNamespace(topo=topo, flavor=flavor, n_d=topo.dual[flavor].n_rows, n_p=topo.n_primal,
                           ops=ops, scaling=sc, At_p=sc.Ap_tilde)


@pytest.mark.parametrize("flavor", ["redundant", "nonredundant", "orthonormal"])
def test_corner_columns_on_hand_layout(flavor):
    ctx = f3_ctx(flavor)
    # the single crosspoint has multiplicity 3: m - 1 dual and m primal columns
    assert dual_corner_columns(ctx).shape[1] == 2
    C = primal_corner_columns(ctx)
    assert C.shape[1] == 3
    np.testing.assert_allclose(C.sum(axis=1), [0, 0, 0, 1 / 3], atol=1e-15)


# -- configuration ---------------------------------------------------------------------------------

@pytest.mark.parametrize("kw,msg", [
    (dict(method="schwarz"), "method"),
    (dict(method="bdd", preconditioner="dirichlet"), "primal"),
    (dict(method="feti", preconditioner="neumann"), "dual"),
    (dict(method="bdd", projector_Q="dirichlet"), "projector_Q"),
    (dict(method="bdd", initialization="condensed_split"), "split"),
    (dict(method="feti", hybrid_split="D-P"), "hybrid_split"),
    (dict(method="feti", constraints="custom"), "custom_C"),
    (dict(method="feti", tol=0.0), "tol"),
    (dict(method="feti", preconditioner="jacobi"), "preconditioner"),
])
def test_config_rejections(kw, msg):
    with pytest.raises(ValueError, match=msg):
        MethodConfig(**kw)


def test_config_round_trip_and_labels():
    cfg = MethodConfig(method="feti", preconditioner="lumped", projector_Q="dirichlet", scaling="stiffness")
    assert MethodConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.display == "feti:lumped-P(dirichlet):stiffness"
    assert MethodConfig(method="bdd", coarse="none").display == "bdd:nocoarse"
    assert MethodConfig(method="bdd", label="mine").display == "mine"
    with pytest.raises(ValueError, match="unknown"):
        MethodConfig.from_dict({"method": "bdd", "colour": 1})


def test_custom_augmentation(sq22):
    ctx = Context(sq22)
    C = dual_corner_columns(ctx)
    _, a = solve(sq22, MethodConfig(method="feti", constraints="custom", custom_C=C.tolist(), tol=1e-10))
    _, b = solve(sq22, MethodConfig(method="feti", constraints="corners", tol=1e-10))
    assert a.iterations == b.iterations and a.coarse == b.coarse


# -- heterogeneity ------------------------------------------------------------------------------------

def test_stiffness_scaling_beats_multiplicity():
    spec = het_spec()
    _, mult = run(spec, method="feti")
    _, stiff = run(spec, method="feti", scaling="stiffness")
    assert stiff.converged and stiff.iterations < mult.iterations


def test_superlumped_projector_halves_iterations():
    # identity Q is not suited to high contrast; measured under stiffness scaling
    spec = het_spec()
    _, plain = run(spec, method="feti", scaling="stiffness")
    _, lumped = run(spec, method="feti", scaling="stiffness", projector_Q="superlumped")
    assert lumped.converged and plain.iterations >= 2 * lumped.iterations


def test_superlumped_projector_helps_with_multiplicity_scaling():
    spec = het_spec()
    _, plain = run(spec, method="feti")
    _, lumped = run(spec, method="feti", projector_Q="superlumped")
    assert lumped.converged and lumped.iterations < plain.iterations


def test_het_layout_changes_operator():
    p = problem(het_spec())
    K, _ = assemble_global(p)
    d = K.diagonal()
    assert d.max() / d.min() > 1e4
