import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import two_node
from gridreconf.formulation import build_problem
from gridreconf.loads import (
    EvaluationError,
    exponential_injection,
    linear_injection,
    load_deviation,
    radial_power_flow,
    transformer_adjusted_load,
)
from gridreconf.network import Node, PhaseLoad, TransformerSpec, nominal_phasor
from gridreconf.solver import solve
from gridreconf.validation import random_network

seeds = st.integers(0, 2**32 - 1)


def cplx(v):
    k = len(v) // 2
    return v[:k] + 1j * v[k:]


@given(seeds)
def test_phasor_block_orthogonality(seed):
    m = random_network(np.random.default_rng(seed))
    for n in m.nodes:
        g, _ = linear_injection(n, m.v_nominal)
        ref = 3 / m.v_nominal**2
        assert np.allclose(g.T @ g, ref * np.eye(2 * len(n.phases)), rtol=0, atol=1e-12 * ref)


def test_zero_load_injects_nothing():
    g, h = linear_injection(Node(5, ("a", "b")), 4800.0)
    assert np.array_equal(h, np.zeros(4))


def test_single_phase_100kw():
    node = Node(2, ("a",), load={"a": PhaseLoad(100.0, 0.0)})
    _, h = linear_injection(node, 4800.0)
    assert np.allclose(h, -(math.sqrt(3) / 4800) * np.array([1e5, 0.0]), rtol=1e-15, atol=0)


def test_balanced_added_load_rotates_per_phase():
    ld = PhaseLoad(85.0, 40.0)
    node = Node(23, ("a", "b", "c"), load={p: ld for p in "abc"})
    v_n = 4800.0
    _, h = linear_injection(node, v_n)
    expect = [-np.conj(ld.s / (v_n / math.sqrt(3) * nominal_phasor(p))) for p in "abc"]
    assert np.allclose(cplx(h), expect, rtol=1e-13, atol=0)


@given(seeds)
def test_linear_equals_exponential_at_nominal(seed):
    m = random_network(np.random.default_rng(seed), p_dg=0.0)
    for n in m.nodes:
        v = np.array([m.v_base * nominal_phasor(p) for p in n.phases])
        _, h = linear_injection(n, m.v_nominal)
        assert np.allclose(exponential_injection(n, v, m.v_nominal), cplx(h), rtol=1e-12, atol=1e-12)


def test_constant_impedance_scales_with_voltage():
    node = Node(2, ("b",), load={"b": PhaseLoad(40.0, 10.0, kappa=2)})
    v0 = np.array([4800 / math.sqrt(3) * nominal_phasor("b")])
    i0 = exponential_injection(node, v0, 4800.0)
    i1 = exponential_injection(node, 0.95 * v0, 4800.0)
    assert np.allclose(i1, 0.95 * i0, rtol=1e-14, atol=0)


def test_constant_power_off_nominal():
    node = Node(2, ("a",), load={"a": PhaseLoad(40.0, 10.0, kappa=0)})
    v = np.array([0.97 * 4800 / math.sqrt(3) * np.exp(-0.05j)])
    i = exponential_injection(node, v, 4800.0)
    assert v[0] * np.conj(i[0]) == pytest.approx(-(40e3 + 10e3j), rel=1e-14)


def test_zero_voltage_with_load_is_an_error():
    node = Node(2, ("a",), load={"a": PhaseLoad(1.0, 0.0)})
    with pytest.raises(EvaluationError):
        exponential_injection(node, np.array([0j]), 4800.0)


def test_lossless_transformer():
    ld = PhaseLoad(98.0, 20.0, transformer=TransformerSpec(0.0, 0.0))
    assert transformer_adjusted_load(ld, 4800.0) == pytest.approx(98e3, rel=1e-15)


def test_transformer_at_98_percent_efficiency():
    # 1 kW core loss and 1 kW winding loss on a 98 kW secondary
    i_mag = math.sqrt(3) * 98e3 / 4800
    ld = PhaseLoad(98.0, 0.0, transformer=TransformerSpec(1.0, 1e3 / i_mag**2))
    p = transformer_adjusted_load(ld, 4800.0)
    assert p == pytest.approx(100e3, rel=1e-14)
    assert 98e3 / p == pytest.approx(0.98, rel=1e-14)


@given(
    st.floats(1, 500),
    st.floats(0, 300),
    st.floats(1e-3, 5),
    st.floats(1e-4, 1),
    st.sampled_from(["p", "lc", "r"]),
    st.floats(0, 2),
)
def test_transformer_load_monotone(p, q, lc, r, which, bump):
    base = PhaseLoad(p, q, transformer=TransformerSpec(lc, r))
    up = PhaseLoad(
        p + bump * (which == "p"), q, transformer=TransformerSpec(lc + bump * (which == "lc"), r + bump * (which == "r"))
    )
    assert transformer_adjusted_load(up, 4160.0) >= transformer_adjusted_load(base, 4160.0)


def test_representative_transformer_efficiency_bound():
    # a 100 kVA unit with 0.25 kW core loss and 1% winding resistance loss at rating
    s = 100e3
    i_mag = math.sqrt(3) * s / 12470
    ld = PhaseLoad(90.0, 43.6, transformer=TransformerSpec(0.25, 0.01 * s / i_mag**2))
    assert transformer_adjusted_load(ld, 12470.0) <= 90e3 / 0.98


def test_transformer_load_enters_injection():
    i_mag = math.sqrt(3) * 98e3 / 4800
    plain = Node(2, ("a",), load={"a": PhaseLoad(100.0, 0.0)})
    tr = Node(2, ("a",), load={"a": PhaseLoad(98.0, 0.0, transformer=TransformerSpec(1.0, 1e3 / i_mag**2))})
    assert np.allclose(linear_injection(tr, 4800.0)[1], linear_injection(plain, 4800.0)[1], rtol=1e-13, atol=0)


def test_power_flow_matches_closed_form():
    # constant-impedance load: the circuit is linear and has an exact solution
    z_line = 0.8 + 1.1j
    m = two_node(p_kw=300.0, q_kvar=120.0, kappa=2, z=z_line, v_kv=4.8)
    v_s = m.v_base
    s = 300e3 + 120e3j
    z_load = abs(v_s) ** 2 / np.conj(s)
    i = v_s / (z_line + z_load)
    loss, volts, ok = radial_power_flow(m, [(1, 2)])
    assert ok
    assert loss == pytest.approx(abs(i) ** 2 * z_line.real, rel=1e-9)
    assert volts[2][0] == pytest.approx(i * z_load, rel=1e-9)


def test_power_flow_needs_a_tree():
    from conftest import ring

    m = ring()
    with pytest.raises(EvaluationError):
        radial_power_flow(m, [l.key for l in m.lines])


def test_deviation_zero_without_load():
    m = two_node(p_kw=0.0)
    sol = solve(build_problem(m))
    assert load_deviation(m, sol) == (0.0, 0.0)


def test_deviation_single_line_closed_form():
    # one constant-power load: the delivered power misses the demand by exactly Z |I|^2
    z = 0.2 + 0.4j
    m = two_node(p_kw=20.0, q_kvar=5.0, z=z, v_kv=4.8)
    i_mag = math.sqrt(3) * abs(20e3 + 5e3j) / 4800
    dp, dq = load_deviation(m, solve(build_problem(m)))
    assert dp == pytest.approx(z.real * i_mag**2, rel=1e-8)
    assert dq == pytest.approx(z.imag * i_mag**2, rel=1e-8)
