import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridreconf.validation import (
    eta_grid_golden,
    eta_objective,
    linearization_suite,
    prop_suite,
    random_network,
    random_pd_impedance,
    sca_suite,
    surrogate_suite,
)

seeds = st.integers(0, 2**32 - 1)


@given(seeds)
def test_random_networks_are_valid(seed):
    m = random_network(np.random.default_rng(seed))
    m.validate()
    assert 3 <= len(m.nodes) <= 10
    assert all(1 <= len(n.phases) <= 3 for n in m.nodes)


@given(seeds, st.integers(1, 3))
def test_random_impedance_parts_are_pd(seed, k):
    z = random_pd_impedance(np.random.default_rng(seed), k)
    assert np.allclose(z, z.T)
    assert np.linalg.eigvalsh(z.real).min() > 0 and np.linalg.eigvalsh(z.imag).min() > 0


def test_eta_oracle_exact_case():
    lam = 0.8
    got = eta_grid_golden(np.array([2 * lam, 0.0]), np.eye(2), lam)
    assert got == pytest.approx(lam**2 / 2, rel=1e-9)
    assert eta_grid_golden(np.array([0.1, 0.1]), np.eye(2), lam) == 0.0


def test_eta_objective_matches_direct_formula():
    rng = np.random.default_rng(0)
    z = np.kron(np.eye(2), random_pd_impedance(rng, 2).real)
    mu, lam, eta = rng.normal(size=4), 0.7, 0.3
    direct = eta - eta / 2 * mu @ np.linalg.solve(eta * z + lam**2 / 2 * np.eye(4), mu)
    assert float(eta_objective(eta, mu, z, lam)) == pytest.approx(direct, rel=1e-13)


def test_small_suites_pass():
    rep = prop_suite(1, cases=5)
    assert rep.cases == 5 and not rep.failures and rep.worst["prop1"] < 1e-4 and rep.worst["prop2"] < 1e-4
    rep = surrogate_suite(1, cases=3, samples=200)
    assert rep.worst["c1"] <= 1e-9 and rep.worst["c3"] <= 1e-6
    rep = sca_suite(1, cases=3, samples=200)
    assert not rep.failures and rep.worst["objective_increase"] <= 1e-9
    rep = linearization_suite(1, cases=5)
    assert rep.worst["ratio"] <= 0.5
