"""Load models: exponential (exact) and linear current-injection approximation.

Phase order is a < b < c; stacked vectors are [Re block; Im block].
"""

from __future__ import annotations

import math
from typing import Optional

import networkx as nx
import numpy as np

from .network import NetworkModel, Node, PhaseLoad, nominal_phasor


class EvaluationError(ValueError):
    pass


def phasor_block(phases) -> np.ndarray:
    """[[Re Phi, Im Phi], [Im Phi, -Re Phi]] for Phi = diag(e^{j phi_N})."""
    phi = np.array([nominal_phasor(p) for p in phases])
    re, im = np.diag(phi.real), np.diag(phi.imag)
    return np.block([[re, im], [im, -re]])


def transformer_adjusted_load(load: PhaseLoad, v_nominal: float) -> float:
    """Active power drawn at the transformer primary in watts.

    P_L = P_sec + L_c + |I|^2 R with |I| = sqrt(3) |S_sec| / V_N taken at
    nominal voltage. Returns Re{S} unchanged when no transformer is attached.
    """
    p = load.p_kw * 1e3
    tr = load.transformer
    if tr is None:
        return p
    i_mag = math.sqrt(3.0) * abs(load.s) / v_nominal
    return p + tr.core_loss_kw * 1e3 + i_mag**2 * tr.r_coeff_ohm


def effective_load(node: Node, v_nominal: float) -> np.ndarray:
    """Stacked [P; Q] demand in W/var with transformer losses folded into P."""
    k = len(node.phases)
    out = np.zeros(2 * k)
    for i, p in enumerate(node.phases):
        if p in node.load:
            ld = node.load[p]
            out[i] = transformer_adjusted_load(ld, v_nominal)
            out[k + i] = ld.q_kvar * 1e3
    return out


def linear_injection(node: Node, v_nominal: float) -> tuple[np.ndarray, np.ndarray]:
    """(G_n, h_n) in SI units: injected current iota = G_n sigma_G + h_n amperes."""
    g = math.sqrt(3.0) / v_nominal * phasor_block(node.phases)
    h = -g @ effective_load(node, v_nominal)
    return g, h


def linear_injection_pu(node: Node, model: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit version of :func:`linear_injection` (sigma in pu of s_base)."""
    g = phasor_block(node.phases)
    h = -g @ (effective_load(node, model.v_nominal) / model.s_base)
    return g, h


def exponential_injection(
    node: Node, voltage: np.ndarray, v_nominal: float, generation: Optional[np.ndarray] = None
) -> np.ndarray:
    """Injected current per phase satisfying V I* = S |sqrt(3) V / V_N|^kappa.

    ``voltage`` is complex per node phase in volts; ``generation`` is an
    optional complex DG output per phase in VA (voltage independent).
    S is the net injection, i.e. generation minus the load.
    """
    voltage = np.asarray(voltage, dtype=complex)
    load = effective_load(node, v_nominal)
    k = len(node.phases)
    out = np.zeros(k, dtype=complex)
    for i, p in enumerate(node.phases):
        s_load = complex(load[i], load[k + i])
        kappa = node.load[p].kappa if p in node.load else 0
        s_gen = 0j if generation is None else complex(generation[i])
        v = voltage[i]
        if abs(v) == 0:
            if s_load != 0 or s_gen != 0:
                raise EvaluationError(f"node {node.id} phase {p}: zero voltage with nonzero power")
            continue
        s = -s_load * abs(math.sqrt(3.0) * v / v_nominal) ** kappa + s_gen
        out[i] = np.conj(s / v)
    return out


# ---------------------------------------------------------------------------
# post-solve voltage reconstruction and load deviation


def _complex_currents(xi: np.ndarray) -> np.ndarray:
    k = len(xi) // 2
    return xi[:k] + 1j * xi[k:]


def reconstruct_voltages(model: NetworkModel, closed, xi_si: dict, v_ref: Optional[dict] = None) -> dict:
    """Propagate the substation voltage along a minimum-resistance spanning tree of ``closed``.

    ``xi_si`` maps line keys to stacked currents in amperes. Returns node id ->
    complex per-phase voltages in volts; raises EvaluationError when the
    closed lines leave nodes unreachable.
    """
    closed = list(closed)
    g = nx.Graph()
    g.add_nodes_from(model.node_ids)
    for key in closed:
        l = model.line(key)
        g.add_edge(*key, weight=float(np.trace(l.impedance.real)) / len(l.phases), key=key)
    sub = model.substation
    comp = nx.node_connected_component(g, sub.id)
    if len(comp) != len(model.nodes):
        lost = sorted(set(model.node_ids) - comp)
        raise EvaluationError(f"selected topology leaves nodes unreachable: {lost}")
    tree = nx.minimum_spanning_tree(g, weight="weight", algorithm="kruskal")
    if v_ref is None:
        v_ref = {p: model.v_base * nominal_phasor(p) for p in sub.phases}
    volts = {sub.id: {p: v_ref[p] for p in sub.phases}}
    for u, v in nx.bfs_edges(tree, sub.id, sort_neighbors=sorted):
        key = tree.edges[u, v]["key"]
        l = model.line(key)
        i = _complex_currents(xi_si[key])
        drop = l.impedance @ i  # v_from - v_to
        sign = 1.0 if key == (u, v) else -1.0
        vu = volts[u]
        vv = {}
        for j, p in enumerate(l.phases):
            vv[p] = vu[p] - sign * drop[j]
        for p in model.node(v).phases:
            vv.setdefault(p, vu.get(p, model.v_base * nominal_phasor(p)))
        volts[v] = vv
    return {n: np.array([volts[n][p] for p in model.node(n).phases]) for n in model.node_ids}


def load_deviation(model: NetworkModel, solution, closed=None) -> tuple[float, float]:
    """Average |P - P_hat| and |Q - Q_hat| per loaded phase, in W and var.

    P_hat + jQ_hat is the power delivered by the solved (linearized) currents at
    the reconstructed voltages, V I*. P + jQ is what the exponential load
    model demands at those voltages, plus the scheduled DG output. The
    substation is excluded. ``closed`` overrides the lines used to propagate
    voltages (default: the solution's closed lines).
    """
    xi_si = solution.currents_si()
    volts = reconstruct_voltages(model, solution.closed_lines() if closed is None else closed, xi_si)
    sigma = solution.dg_setpoints_si()
    iota = solution.injections_si()
    dp = dq = 0.0
    count = 0
    for n in model.nodes:
        if n.is_substation:
            continue
        count += sum(1 for ld in n.load.values() if abs(ld.s) > 0)
        if n.id not in iota:
            continue
        v = volts[n.id]
        delivered = v * np.conj(_complex_currents(iota[n.id]))
        gen = None
        if n.id in sigma:
            gen = _complex_currents(sigma[n.id])
        demanded = v * np.conj(exponential_injection(n, v, model.v_nominal, gen))
        dp += float(np.sum(np.abs(delivered.real - demanded.real)))
        dq += float(np.sum(np.abs(delivered.imag - demanded.imag)))
    if count == 0:
        return 0.0, 0.0
    return dp / count, dq / count


def injection_error(model: NetworkModel, solution, closed=None) -> dict:
    """Per-node |I_exp(V) - I_lin| in amperes at the reconstructed voltages."""
    xi_si = solution.currents_si()
    volts = reconstruct_voltages(model, solution.closed_lines() if closed is None else closed, xi_si)
    sigma = solution.dg_setpoints_si()
    iota = solution.injections_si()
    out = {}
    for n in model.nodes:
        if n.is_substation or n.id not in iota:
            continue
        gen = _complex_currents(sigma[n.id]) if n.id in sigma else None
        exact = exponential_injection(n, volts[n.id], model.v_nominal, gen)
        out[n.id] = float(np.linalg.norm(exact - _complex_currents(iota[n.id])))
    return out


def radial_power_flow(
    model: NetworkModel, closed, generation: Optional[dict] = None, tol: float = 1e-10, max_iter: int = 100
) -> tuple[float, dict, bool]:
    """Backward/forward sweep with exponential loads on a radial topology.

    ``generation`` maps node ids to complex per-phase DG output in VA (the
    substation is the slack). Returns (loss in W, node voltages in V,
    converged). Diagnostic only: the convex program never uses it.
    """
    closed = [tuple(k) for k in closed]
    g = nx.Graph()
    g.add_nodes_from(model.node_ids)
    for key in closed:
        g.add_edge(*key, key=key)
    sub = model.substation
    if not nx.is_tree(g):
        raise EvaluationError("power flow sweep needs a connected radial topology")
    order = [sub.id] + [v for _, v in nx.bfs_edges(g, sub.id, sort_neighbors=sorted)]
    parent = {}
    for u, v in nx.bfs_edges(g, sub.id, sort_neighbors=sorted):
        parent[v] = (u, g.edges[u, v]["key"])
    generation = generation or {}
    volts = {n: {p: model.v_base * nominal_phasor(p) for p in model.node(n).phases} for n in model.node_ids}
    branch = {}
    converged = False
    for _ in range(max_iter):
        inj = {}
        for n in model.nodes:
            if n.is_substation:
                continue
            v = np.array([volts[n.id][p] for p in n.phases])
            gen = generation.get(n.id)
            inj[n.id] = dict(zip(n.phases, exponential_injection(n, v, model.v_nominal, gen)))
        # downstream sums of drawn current (minus injection)
        acc = {n: {p: 0j for p in model.node(n).phases} for n in model.node_ids}
        for n in reversed(order[1:]):
            for p, val in inj[n].items():
                acc[n][p] -= val
            u, key = parent[n]
            l = model.line(key)
            i = np.array([acc[n].get(p, 0j) for p in l.phases])
            branch[key] = i if key == (u, n) else -i
            for j, p in enumerate(l.phases):
                acc[u][p] += acc[n].get(p, 0j)
        change = 0.0
        for n in order[1:]:
            u, key = parent[n]
            l = model.line(key)
            drop = l.impedance @ branch[key]
            sign = 1.0 if key == (u, n) else -1.0
            for j, p in enumerate(l.phases):
                new = volts[u][p] - sign * drop[j]
                change = max(change, abs(new - volts[n][p]))
                volts[n][p] = new
        if change < tol * model.v_base:
            converged = True
            break
    loss = 0.0
    for key, i in branch.items():
        z = model.line(key).impedance
        loss += float(np.real(np.conj(i) @ z @ i))
    out = {n: np.array([volts[n][p] for p in model.node(n).phases]) for n in model.node_ids}
    return loss, out, converged
