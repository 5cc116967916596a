import math

import numpy as np
import pytest
from hypothesis import settings

from gridreconf import datasets
from gridreconf.network import Line, NetworkModel, Node, PhaseLoad

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


def two_node(p_kw=100.0, q_kvar=0.0, kappa=0, z=(0.2 + 0.4j), v_kv=4.8, phase="a", switchable=False, i_max=None):
    """Substation feeding one single-phase load through one line."""
    load = {phase: PhaseLoad(p_kw, q_kvar, kappa)} if (p_kw or q_kvar) else {}
    nodes = (Node(1, ("a", "b", "c"), is_substation=True), Node(2, (phase,), load=load))
    line = Line(1, 2, (phase,), np.array([[z]]), switchable=switchable, i_max_amp=i_max)
    return NetworkModel(nodes, (line,), v_kv, 100.0, name="two-node")


def ring(loads=(60.0, 90.0, 40.0), switch_all=True, v_kv=4.16, z=(0.3 + 0.5j)):
    """Single-phase ring 1-2-3-4-1 with the substation at 1; every line switchable by default."""
    nodes = [Node(1, ("a", "b", "c"), is_substation=True)]
    for i, p in enumerate(loads, start=2):
        nodes.append(Node(i, ("a",), load={"a": PhaseLoad(p, 0.3 * p)}))
    keys = [(1, 2), (2, 3), (3, 4), (1, 4)]
    lines = [Line(a, b, ("a",), np.array([[z * (1 + 0.1 * i)]]), switchable=switch_all) for i, (a, b) in enumerate(keys)]
    return NetworkModel(tuple(nodes), tuple(lines), v_kv, 100.0, name="ring")


@pytest.fixture(scope="session")
def five_node():
    return datasets.load("five_node")


@pytest.fixture(scope="session")
def ieee37_test1():
    return datasets.load("ieee37_test1")


@pytest.fixture(scope="session")
def ieee37_test2():
    return datasets.load("ieee37_test2")


@pytest.fixture(scope="session")
def baran33():
    return datasets.load("baran33")


def close(a, b, rel=1e-12, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)


# acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary
ACCEPTANCE: dict = {}


def record(criterion: str, part: str, ok: bool, detail: str = "") -> bool:
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
    print(f"[{criterion}] {part}: {'PASS' if ok else 'FAIL'} {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion, parts in ACCEPTANCE.items():
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        tr.write_line(f"{verdict} {criterion}")
        for part, ok, detail in parts:
            tr.write_line(f"    {'ok  ' if ok else 'MISS'} {part} {detail}")
