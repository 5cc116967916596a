import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import ring, two_node
from gridreconf.formulation import build_p2
from gridreconf.solver import (
    SolverConfig,
    VerificationError,
    complementarity_caps,
    line_dual_drive,
    predicted_switched_current,
    solve,
    solve_eta,
    strict_feasibility_margin,
    verify_prop1,
    verify_prop2,
)
from gridreconf.validation import eta_grid_golden, random_network, random_pd_impedance

seeds = st.integers(0, 2**32 - 1)


def cvxopt_objective(problem):
    """Optimal value of the same standard form from an independent interior-point code."""
    pytest.importorskip("cvxopt")
    from cvxopt import matrix, solvers

    f = problem.form
    solvers.options.update(show_progress=False, abstol=1e-11, reltol=1e-11, feastol=1e-11)
    dims = {"l": f.n_nonneg, "q": list(f.soc_dims), "s": []}
    res = solvers.coneqp(
        matrix(f.P.toarray()),
        matrix(f.q),
        matrix(f.G.toarray()),
        matrix(f.h),
        dims,
        matrix(f.A.toarray()),
        matrix(f.b),
    )
    assert res["status"] == "optimal"
    x = np.array(res["x"]).ravel()
    return f.objective(x)


@pytest.mark.parametrize("seed", range(8))
def test_matches_independent_conic_solver(seed):
    rng = np.random.default_rng(seed)
    m = random_network(rng)
    prob = build_p2(m, lam=float(rng.uniform(0, 10)))
    sol = solve(prob)
    assert sol.status == "optimal"
    ref = cvxopt_objective(prob)
    assert sol.objective == pytest.approx(ref, rel=1e-6, abs=1e-12)


def test_optimal_means_small_residuals():
    sol = solve(build_p2(random_network(np.random.default_rng(1)), lam=3.0), SolverConfig(tol=1e-8))
    assert sol.status == "optimal" and sol.kkt.worst() <= 1e-8


def test_deterministic():
    m = random_network(np.random.default_rng(9))
    a, b = solve(build_p2(m, lam=4.0)), solve(build_p2(m, lam=4.0))
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_zero_load_gives_zero_currents(five_node):
    from gridreconf.network import NetworkModel, Node

    empty = NetworkModel(
        tuple(Node(n.id, n.phases, n.is_substation) for n in five_node.nodes), five_node.lines, 4.16, 1000.0
    )
    for lam in (0.0, 50.0):
        sol = solve(build_p2(empty, lam=lam))
        assert sol.status == "optimal"
        assert all(np.linalg.norm(v) < 1e-9 for v in sol.xi.values())
        assert abs(sol.objective) < 1e-12


def test_infeasible_caps_are_certified():
    # 100 kW at 4.8 kV needs ~36 A; cap the line at 5 A
    sol = solve(build_p2(two_node(i_max=5.0)))
    assert sol.status == "infeasible"
    with pytest.raises(VerificationError):
        verify_prop1(sol)


def test_iteration_limit_reported():
    sol = solve(build_p2(random_network(np.random.default_rng(2)), lam=1.0), SolverConfig(max_iter=1))
    assert sol.status == "max_iter"


def test_binding_cap_multipliers():
    # two parallel paths; capping the cheap one forces the multiplier on
    m = ring()
    sol = solve(build_p2(m))
    i12 = np.linalg.norm(sol.currents_si()[(1, 2)])
    lines = tuple(replace(l, i_max_amp=0.8 * i12) if l.key == (1, 2) else l for l in m.lines)
    capped = replace(m, lines=lines)
    sol = solve(build_p2(capped))
    assert sol.status == "optimal"
    rho = sol.rho
    assert rho[((1, 2), "a")] > 0 and all(v >= 0 for v in rho.values())
    assert complementarity_caps(sol) < 1e-7
    assert verify_prop1(sol) < 1e-6
    assert strict_feasibility_margin(sol.problem) > 0


def test_eta_exact_case():
    # Z = I, mu = 2 lam e1: the stationarity condition reads (eta + lam^2/2)^2 = lam^4
    for lam in (0.1, 1.0, 7.5):
        mu = np.array([2 * lam, 0.0])
        assert solve_eta(mu, np.eye(2), lam) == pytest.approx(lam**2 / 2, rel=1e-14)


def test_eta_zero_inside_ball():
    assert solve_eta(np.array([0.3, 0.4]), np.eye(2), 0.5) == 0.0
    with pytest.raises(ValueError):
        solve_eta(np.ones(2), np.eye(2), 0.0)


@given(seeds)
def test_eta_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    z = random_pd_impedance(rng, k).real
    zbar = np.kron(np.eye(2), z)
    lam = float(rng.uniform(0.05, 2))
    mu = rng.normal(size=2 * k)
    mu *= lam * rng.uniform(1.05, 5) / np.linalg.norm(mu)
    a, b = solve_eta(mu, zbar, lam), eta_grid_golden(mu, zbar, lam)
    assert a == pytest.approx(b, rel=1e-8)


def test_soft_threshold_single_phase():
    z = 0.7 * np.eye(2)
    mu = np.array([3.0, 4.0])
    assert np.allclose(predicted_switched_current(mu, z, 5.0), 0.0)
    # block soft thresholding: shrink |mu| by lam, then scale by 1/z
    expect = (5.0 - 2.0) / 5.0 * mu / 0.7
    assert np.allclose(predicted_switched_current(mu, z, 2.0), expect, rtol=1e-14)
    # general path agrees with the closed form
    eta = solve_eta(mu, z, 2.0)
    general = eta * np.linalg.solve(eta * z + 2.0 * np.eye(2), mu)
    assert np.allclose(general, expect, rtol=1e-10)


def test_single_switch_thresholding():
    # one switched line (1, 4) in a single-phase ring: zero exactly when |mu| <= lam
    m = ring().with_switchable([(1, 2), (2, 3), (3, 4)], False)
    seen = set()
    for lam in np.geomspace(1, 2000, 12):
        sol = solve(build_p2(m, lam=float(lam)))
        k = m.line_index((1, 4))
        mu = line_dual_drive(sol, k)
        lam_pu = sol.problem.lambda_pu(k)
        xi = sol.xi[(1, 4)]
        if np.linalg.norm(mu) <= lam_pu * (1 - 1e-6):
            seen.add("zero")
            assert np.linalg.norm(xi) <= sol.group_threshold((1, 4))
        elif np.linalg.norm(mu) > lam_pu * (1 + 1e-6):
            seen.add("active")
            zt = sol.problem.zbar(k)[0, 0]
            pred = (np.linalg.norm(mu) - lam_pu) / (zt * np.linalg.norm(mu)) * mu
            assert np.linalg.norm(xi - pred) <= 1e-5 * np.linalg.norm(pred)
    assert seen == {"zero", "active"}


@pytest.mark.parametrize("seed", range(5))
def test_closed_forms_on_random_feeders(seed):
    rng = np.random.default_rng(100 + seed)
    m = random_network(rng)
    sol = solve(build_p2(m, lam=float(rng.uniform(0, 10))))
    assert verify_prop1(sol) < 1e-4 and verify_prop2(sol) < 1e-4


def test_polish_improves_or_keeps_residuals():
    m = random_network(np.random.default_rng(31), p_cap=1.0)
    prob = build_p2(m, lam=5.0)
    raw = solve(prob, SolverConfig(polish=False))
    pol = solve(prob, SolverConfig(polish=True))
    assert pol.kkt.worst() <= raw.kkt.worst()
    assert pol.objective == pytest.approx(raw.objective, rel=1e-6, abs=1e-12)


def test_solution_record_has_duals(five_node):
    import json

    sol = solve(build_p2(five_node, lam=10.0))
    d = json.loads(sol.dumps())
    assert d["status"] == "optimal"
    assert set(d["mu_pu"]) == {str(n) for n in five_node.node_ids}
    assert len(d["t_pu"]) == 3
    assert math.isclose(d["loss_w"], sol.loss_watts())


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(group_eps=-1)


def test_group_just_past_threshold_is_resolved():
    # a switched line whose |mu| sits within 0.1 % of lambda: the default
    # interior-point iterate leaves its closed form off by 14 %
    rng = np.random.default_rng(2026)
    for _ in range(53):
        m, lam = random_network(rng), float(rng.uniform(0, 10))
    sol = solve(build_p2(m, lam=lam))
    k = m.line_index((1, 3))
    assert abs(np.linalg.norm(line_dual_drive(sol, k)) / sol.problem.lambda_pu(k) - 1) < 1e-3
    assert verify_prop2(sol) < 1e-8


def test_newton_step_on_singular_system():
    from gridreconf.solver import _kkt_step
    import scipy.sparse as sp

    # duplicated constraint row: singular but consistent
    h = sp.identity(2, format="csc")
    j = sp.csc_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    kkt = sp.bmat([[h, j.T], [j, None]], format="csc")
    rhs = np.array([1.0, 2.0, 3.0, 3.0])
    step = _kkt_step(kkt, 2, rhs)
    assert np.allclose(kkt @ step, rhs, atol=1e-9)
