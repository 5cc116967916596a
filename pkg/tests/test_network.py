import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import ring, two_node
from gridreconf import datasets
from gridreconf.network import (
    ModelError,
    NOMINAL_ANGLE,
    ParseError,
    build_incidence,
    enumerate_cycles,
    network_from_dict,
    network_to_dict,
    parse_network,
    serialize_network,
    switch_free_path,
)
from gridreconf.validation import random_network

seeds = st.integers(0, 2**32 - 1)


def minimal_doc():
    return {
        "v_nominal_kv": 4.8,
        "s_base_kva": 100,
        "nodes": [{"id": 1, "phases": "abc", "substation": True}, {"id": 2, "phases": "a"}],
        "lines": [{"from": 1, "to": 2, "phases": "a", "z_real": [[0.2]], "z_imag": [[0.4]]}],
    }


def unknown_config_line():
    return {"from": 1, "to": 2, "phases": "a", "config_id": "999", "length_ft": 10}


def test_nominal_angles():
    assert NOMINAL_ANGLE == {"a": 0.0, "b": -2 * math.pi / 3, "c": 2 * math.pi / 3}


def test_minimal_two_node_file(tmp_path):
    p = tmp_path / "net.json"
    p.write_text(json.dumps(minimal_doc()))
    m = parse_network(p)
    assert len(m.lines) == 1 and m.switch_keys == ()
    assert m.line((1, 2)).impedance[0, 0] == 0.2 + 0.4j


def test_per_unit_bases():
    m = two_node(v_kv=4.8)
    assert m.v_base == pytest.approx(4800 / math.sqrt(3), rel=1e-15)
    assert m.z_base == pytest.approx(m.v_base**2 / 1e5, rel=1e-15)
    assert m.i_base * m.v_base == pytest.approx(1e5, rel=1e-15)


def test_ieee37_added_lines(ieee37_test1):
    assert len(ieee37_test1.switch_keys) == 8
    assert (8, 14) in ieee37_test1.switch_keys


def test_config_table_impedance(ieee37_test1):
    raw = json.loads(datasets.path("ieee37_test1").read_text())
    cfg = raw["configs"]["723"]
    zc = np.array(cfg["z_real"]) + 1j * np.array(cfg["z_imag"])
    assert np.allclose(ieee37_test1.line((8, 14)).impedance, zc * 1144 / 5280, rtol=1e-14, atol=0)


def test_baran33_base_configuration(baran33):
    assert len(baran33.lines) == 37
    # single-phase equivalent: the phase voltage base is the 12.66 kV rating
    assert baran33.v_base == pytest.approx(12.66e3, rel=1e-12)
    assert len(baran33.lines) - len(baran33.base_configuration()) == 5
    total = sum(ld.s for n in baran33.nodes for ld in n.load.values())
    assert total.real == pytest.approx(3715e3)  # feeder load before losses


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["nodes"][1].pop("phases"), "nodes[1].phases"),
        (lambda d: d["nodes"][1].update(phases="ax"), "nodes[1].phases"),
        (lambda d: d["lines"][0].update({"from": "1"}), "lines[0].from"),
        (lambda d: d["lines"][0].update(z_real=[[1, 2]]), "lines[0].z_real"),
        (lambda d: d.pop("v_nominal_kv"), "v_nominal_kv"),
        (lambda d: d["nodes"][1].update(load={"a": {"p_kw": "x"}}), "nodes[1].load.a.p_kw"),
        (lambda d: d["nodes"][1].update(load={"a": {"p_kw": 1, "kappa": 3}}), "nodes[1].load.a.kappa"),
        (lambda d: d["nodes"][1].update(load={"connection": "delta", "a": {"p_kw": 1}}), "connection"),
        (lambda d: d["lines"].__setitem__(0, unknown_config_line()), "config_id"),
    ],
)
def test_schema_errors_name_the_field(mutate, field):
    d = minimal_doc()
    mutate(d)
    with pytest.raises(ParseError, match=field.replace("[", r"\[").replace("]", r"\]")):
        network_from_dict(d)


def test_json_syntax_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "v_nominal_kv": 4.8,\n "nodes": [,\n}')
    with pytest.raises(ParseError, match="line 3"):
        parse_network(p)


def test_non_pd_real_part_names_line():
    d = minimal_doc()
    d["lines"][0]["z_real"] = [[-0.1]]
    with pytest.raises(ModelError, match=r"\(1, 2\)"):
        network_from_dict(d)


def test_disconnected_lists_nodes():
    d = minimal_doc()
    d["nodes"].append({"id": 7, "phases": "b"})
    with pytest.raises(ModelError, match=r"\[7\]"):
        network_from_dict(d)


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda d: d["nodes"][0].update(substation=False), "substation"),
        (lambda d: d["nodes"][0].update(phases="a") or d["nodes"][1].update(phases="ab"), "substation"),
        (lambda d: d["lines"][0].update(phases="b", z_real=[[0.2]], z_imag=[[0.4]]), "not available"),
        (lambda d: d["lines"].append({"from": 2, "to": 2, "phases": "a", "z_real": [[1]]}), "self-loop"),
        (lambda d: d["nodes"][1].update(dg={"b": {"p_min_kw": 0, "p_max_kw": 1}}), "exceed"),
        (lambda d: d["nodes"][1].update(dg={"a": {"p_min_kw": 2, "p_max_kw": 1}}), "inverted"),
    ],
)
def test_model_errors(mutate, msg):
    d = minimal_doc()
    mutate(d)
    with pytest.raises(ModelError, match=msg):
        network_from_dict(d)


@given(seeds)
def test_round_trip(tmp_path_factory, seed):
    m = random_network(np.random.default_rng(seed))
    p = tmp_path_factory.mktemp("rt") / "m.json"
    serialize_network(m, p)
    back = parse_network(p)
    assert back == m
    assert network_to_dict(back) == network_to_dict(m)


@pytest.mark.parametrize("name", sorted(datasets.BUNDLED))
def test_bundled_round_trip(tmp_path, name):
    m = datasets.load(name)
    serialize_network(m, tmp_path / "m.json")
    assert parse_network(tmp_path / "m.json") == m


def test_incidence_full_and_single_phase():
    m = ring()
    assert np.array_equal(build_incidence(m).selection[(2, 0)], np.eye(1))
    from gridreconf.network import Line, NetworkModel, Node

    nodes = (Node(1, ("a", "b", "c"), is_substation=True), Node(2, ("a", "b", "c")))
    full = NetworkModel(nodes, (Line(1, 2, ("a", "b", "c"), np.eye(3) * (1 + 1j)),), 4.16, 100)
    assert np.array_equal(build_incidence(full).selection[(2, 0)], np.eye(3))
    # phase b line leaving a three-phase node
    a = build_incidence(two_node(phase="b")).selection[(1, 0)]
    assert np.array_equal(a, np.array([[0.0], [1.0], [0.0]]))


def direct_kcl(model, currents):
    """Per node and phase: incoming minus outgoing line currents, by direct summation."""
    out = {}
    for n in model.nodes:
        for p in n.phases:
            total = 0j
            for l in model.lines:
                if p not in l.phases:
                    continue
                i = currents[l.key][l.phases.index(p)]
                if l.to_node == n.id:
                    total += i
                if l.from_node == n.id:
                    total -= i
            out[(n.id, p)] = total
    return out


@given(seeds)
def test_incidence_matches_direct_summation(seed):
    rng = np.random.default_rng(seed)
    m = random_network(rng)
    inc = build_incidence(m)
    currents = {l.key: rng.normal(size=len(l.phases)) + 1j * rng.normal(size=len(l.phases)) for l in m.lines}
    ref = direct_kcl(m, currents)
    for n in m.nodes:
        total = np.zeros(len(n.phases), dtype=complex)
        for k in inc.incoming[n.id]:
            total += inc.selection[(n.id, k)] @ currents[m.lines[k].key]
        for k in inc.outgoing[n.id]:
            total -= inc.selection[(n.id, k)] @ currents[m.lines[k].key]
        expect = np.array([ref[(n.id, p)] for p in n.phases])
        assert np.allclose(total, expect, rtol=1e-12, atol=1e-12)
        for k in inc.incoming[n.id] + inc.outgoing[n.id]:
            a = inc.selection[(n.id, k)]
            assert np.all(a.sum(axis=0) == 1)


def test_incidence_node2_hand_built(ieee37_test1):
    inc = build_incidence(ieee37_test1)
    m = ieee37_test1
    for k, l in enumerate(m.lines):
        if 2 not in l.key:
            continue
        node = m.node(2)
        hand = np.zeros((len(node.phases), len(l.phases)))
        for j, p in enumerate(l.phases):
            hand[node.phases.index(p), j] = 1
        assert np.array_equal(inc.selection[(2, k)], hand)


@given(seeds)
def test_cycle_count(seed):
    m = random_network(np.random.default_rng(seed))
    cycles = enumerate_cycles(m)
    assert len(cycles) == len(m.lines) - len(m.nodes) + 1
    for c in cycles:
        g = m.graph(c)
        degrees = [d for _, d in g.degree() if d]
        assert all(d == 2 for d in degrees)


def test_cycles_examples(five_node, ieee37_test1):
    assert len(enumerate_cycles(five_node)) == 2
    assert len(enumerate_cycles(ieee37_test1)) == 8
    tree = ieee37_test1.with_lines(ieee37_test1.base_configuration())
    assert enumerate_cycles(tree) == []


def test_switch_free_path_to_substation(ieee37_test1):
    inc = build_incidence(ieee37_test1)
    path = switch_free_path(ieee37_test1, inc, ieee37_test1.substation.id)
    assert path.reference == ieee37_test1.substation.id and path.edges == ()


def test_switch_free_path_along_feeder(ieee37_test1):
    m = ieee37_test1
    inc = build_incidence(m)
    path = switch_free_path(m, inc, 4)
    assert path.reference == 1
    assert [m.lines[k].key for k, _ in path.edges] == [(1, 2), (2, 3), (3, 4)]
    assert all(a == -1 for _, a in path.edges)


def test_switch_free_path_fallback_reference():
    # 1 -(switch)- 2 - 3 (loaded) - 4: node 4 is cut from the substation by the switch
    from gridreconf.network import Line, NetworkModel, Node, PhaseLoad

    z = np.array([[0.1 + 0.2j]])
    nodes = (
        Node(1, ("a", "b", "c"), is_substation=True),
        Node(2, ("a",)),
        Node(3, ("a",), load={"a": PhaseLoad(10, 0)}),
        Node(4, ("a",)),
    )
    lines = (Line(1, 2, ("a",), z, switchable=True), Line(2, 3, ("a",), z), Line(3, 4, ("a",), z))
    m = NetworkModel(nodes, lines, 4.16, 100)
    p = switch_free_path(m, build_incidence(m), 4)
    assert p.reference == 3
    assert [(m.lines[k].key, a) for k, a in p.edges] == [((3, 4), -1)]
    # walking against the line direction flips the sign
    back = switch_free_path(m, build_incidence(m), 2)
    assert back.reference == 3 and [(m.lines[k].key, a) for k, a in back.edges] == [((2, 3), 1)]


def test_no_admissible_reference():
    m = ring(loads=(0.0, 0.0, 0.0))
    assert switch_free_path(m, build_incidence(m), 3) is None


@given(seeds)
def test_paths_avoid_switches(seed):
    m = random_network(np.random.default_rng(seed))
    inc = build_incidence(m)
    for n in m.node_ids:
        p = switch_free_path(m, inc, n)
        if p is None:
            continue
        assert not any(m.lines[k].switchable for k, _ in p.edges)
        # the path is contiguous from the reference to the target
        here = p.reference
        for k, a in p.edges:
            l = m.lines[k]
            assert here in l.key
            there = l.to_node if here == l.from_node else l.from_node
            assert a == (-1 if (here, there) == l.key else 1)
            here = there
        assert here == n
