"""Random feeders and the randomized self-check suites behind ``gridreconf validate``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formulation import ObjectiveSpec, VoltageSpec, build_problem
from .network import PHASE_ORDER, Line, NetworkModel, Node, PhaseDg, PhaseLoad
from .solver import SolverConfig, solve, verify_prop1, verify_prop2


def random_pd_impedance(rng: np.random.Generator, k: int, scale: float = 0.3) -> np.ndarray:
    """Complex k x k impedance in ohms whose real and imaginary parts are symmetric positive definite."""
    parts = []
    for ratio in (1.0, 2.0):
        a = rng.normal(size=(k, k)) * 0.3
        m = a @ a.T + np.eye(k) * rng.uniform(0.5, 1.5)
        parts.append(scale * ratio * m / np.max(np.abs(m)))
    return parts[0] + 1j * parts[1]


def random_network(
    rng: np.random.Generator,
    n_nodes: tuple[int, int] = (3, 10),
    extra_lines: tuple[int, int] = (1, 3),
    p_switch: float = 0.6,
    p_dg: float = 0.3,
    p_cap: float = 0.3,
    kappa=(0, 1, 2),
    v_nominal_kv: float = 4.16,
) -> NetworkModel:
    """Meshed random feeder with 1 to 3 phases per node.

    A random tree rooted at the three-phase substation (node 0) gets a few
    extra loop lines. Child phases are subsets of parent phases, so every
    phase of every node has a path to the substation. Capped lines get
    limits well above the worst-case current so the instances stay feasible.
    """
    n = int(rng.integers(n_nodes[0], n_nodes[1] + 1))
    phases = {0: PHASE_ORDER}
    parent = {}
    for v in range(1, n):
        u = int(rng.integers(0, v))
        parent[v] = u
        up = phases[u]
        size = int(rng.integers(1, len(up) + 1))
        keep = set(rng.choice(len(up), size=size, replace=False).tolist())
        phases[v] = tuple(p for i, p in enumerate(up) if i in keep)
    edges = {(parent[v], v) for v in range(1, n)}
    wanted = int(rng.integers(extra_lines[0], extra_lines[1] + 1))
    for _ in range(20 * wanted):
        if wanted == 0 or n < 3:
            break
        a, b = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
        common = tuple(p for p in phases[a] if p in phases[b])
        if (a, b) in edges or not common:
            continue
        edges.add((a, b))
        wanted -= 1

    nodes = []
    total_kva = 0.0
    for v in range(n):
        if v == 0:
            nodes.append(Node(0, PHASE_ORDER, is_substation=True))
            continue
        load, dg = {}, {}
        for p in phases[v]:
            if rng.random() < 0.85:
                pk = float(rng.uniform(10, 200))
                load[p] = PhaseLoad(pk, float(rng.uniform(0, 0.6) * pk), int(rng.choice(kappa)))
                total_kva += abs(complex(pk, load[p].q_kvar))
            if rng.random() < p_dg:
                hi = float(rng.uniform(5, 60))
                dg[p] = PhaseDg(0.0, hi, -0.3 * hi, 0.3 * hi, float(rng.uniform(0, 0.05)))
        nodes.append(Node(v, phases[v], load=load, dg=dg))

    # worst case: the whole load on one phase through one line
    i_worst = math.sqrt(3.0) * max(total_kva, 1.0) * 1e3 / (v_nominal_kv * 1e3)
    lines = []
    for a, b in sorted(edges):
        ph = tuple(p for p in phases[a] if p in phases[b])
        cap = float(rng.uniform(1.5, 3.0) * i_worst) if rng.random() < p_cap else None
        lines.append(
            Line(a, b, ph, random_pd_impedance(rng, len(ph)), switchable=bool(rng.random() < p_switch), i_max_amp=cap)
        )
    return NetworkModel(tuple(nodes), tuple(lines), v_nominal_kv, 1000.0, name="random")


# ---------------------------------------------------------------------------
# independent oracle for the scalar eta program


def eta_objective(eta, mu: np.ndarray, z: np.ndarray, lam: float):
    """eta - (eta/2) mu'(eta Z + lam^2/2 I)^{-1} mu in extended precision (diagonalized Z)."""
    w, v = np.linalg.eigh(z)
    c2 = np.asarray(v.T @ mu, dtype=np.longdouble) ** 2
    e = np.longdouble(eta)
    half = np.longdouble(lam) * np.longdouble(lam) / 2
    return e - e / 2 * np.sum(c2 / (e * np.asarray(w, dtype=np.longdouble) + half))


def eta_grid_golden(mu: np.ndarray, z: np.ndarray, lam: float, points: int = 400) -> float:
    """Minimize the eta objective on a log grid, then by golden-section search on the bracketing cells.

    Shares no code with :func:`gridreconf.solver.solve_eta`, which root-finds
    the derivative; used to cross-check it.
    """
    if np.linalg.norm(mu) <= lam:
        return 0.0
    w = np.linalg.eigvalsh(z)
    # beyond this eta the derivative is positive: |mu|^2 lam^2 / (4 eta^2 w_min^2) < 1
    top = 2.0 * float(np.linalg.norm(mu)) * lam / (2.0 * w.min()) + 1.0
    grid = np.concatenate([[0.0], np.geomspace(1e-12 * top, top, points)])
    vals = [eta_objective(e, mu, z, lam) for e in grid]
    i = int(np.argmin(vals))
    a = np.longdouble(grid[max(i - 1, 0)])
    b = np.longdouble(grid[min(i + 1, len(grid) - 1)])
    g = (np.sqrt(np.longdouble(5)) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = eta_objective(c, mu, z, lam), eta_objective(d, mu, z, lam)
    for _ in range(300):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = eta_objective(c, mu, z, lam)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = eta_objective(d, mu, z, lam)
        if b - a < 1e-17 * max(1.0, float(b)):
            break
    return float((a + b) / 2)


# ---------------------------------------------------------------------------
# suites


@dataclass
class SuiteReport:
    name: str
    cases: int = 0
    worst: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def note(self, key: str, value: float):
        self.worst[key] = max(self.worst.get(key, 0.0), float(value))


def prop_suite(seed: int, cases: int = 100, config: SolverConfig = SolverConfig()) -> SuiteReport:
    """Solve random feeders at random lambda in [0, 10] V and verify both closed forms."""
    rng = np.random.default_rng(seed)
    rep = SuiteReport("closed-form")
    while rep.cases < cases:
        model = random_network(rng)
        lam = float(rng.uniform(0, 10))
        sol = solve(build_problem(model, ObjectiveSpec(), lam), config)
        rep.cases += 1
        if sol.status != "optimal":
            rep.failures.append((rep.cases, sol.status))
            continue
        rep.note("kkt", sol.kkt.worst())
        rep.note("prop1", verify_prop1(sol))
        rep.note("prop2", verify_prop2(sol))
    return rep


def eta_suite(seed: int, cases: int = 200) -> SuiteReport:
    """Compare the eta root-finder against the grid plus golden-section oracle."""
    from .solver import solve_eta

    rng = np.random.default_rng(seed)
    rep = SuiteReport("eta")
    for _ in range(cases):
        k = int(rng.integers(1, 4))
        z = random_pd_impedance(rng, k)
        zbar = np.block([[z.real, np.zeros((k, k))], [np.zeros((k, k)), z.real]])
        lam = float(rng.uniform(0.05, 2.0))
        mu = rng.normal(size=2 * k)
        mu *= lam * rng.uniform(1.05, 5.0) / np.linalg.norm(mu)
        a, b = solve_eta(mu, zbar, lam), eta_grid_golden(mu, zbar, lam)
        rep.cases += 1
        rep.note("eta_abs", abs(a - b))
        rep.note("eta_rel", abs(a - b) / max(abs(b), 1e-300))
    return rep


def random_magnitude_instance(rng: np.random.Generator, config: SolverConfig = SolverConfig()):
    """Random feeder with a lower magnitude bound that binds at the unconstrained optimum.

    Returns (model, VoltageSpec) or None when no binding, feasible bound was found.
    """
    # no switches: every node then has a switch-free path to the substation
    model = random_network(rng, n_nodes=(4, 8), p_cap=0.0, p_switch=0.0, p_dg=0.6)
    model = model.with_v_nominal(model.v_nominal_kv * 0.25)  # heavier relative drops
    spec = VoltageSpec.magnitude_bounds(model, 1e-9, math.inf)
    prob = build_problem(model, ObjectiveSpec(), 0.0, VoltageSpec("magnitude", {}, {}))
    sol = solve(prob, config)
    if sol.status != "optimal":
        return None
    probe = build_problem(model, ObjectiveSpec(), 0.0, spec)
    mags = [float(np.linalg.norm(r.value(sol.x))) for r in probe.magnitude_rows]
    if not mags:
        return None
    lowest = min(mags)
    if lowest >= 1.0:
        return None
    # bound just above the lowest magnitude: binding but reachable
    vmin = lowest + float(rng.uniform(0.02, 0.2)) * (1.0 - lowest)
    return model, VoltageSpec.magnitude_bounds(model, vmin, math.inf)


def surrogate_suite(seed: int, cases: int = 25, samples: int = 1000) -> SuiteReport:
    """Check dominance, tightness and gradient agreement of the magnitude surrogates at random points."""
    rng = np.random.default_rng(seed)
    rep = SuiteReport("surrogate")
    while rep.cases < cases:
        inst = random_magnitude_instance(rng)
        if inst is None:
            continue
        model, spec = inst
        prob = build_problem(model, ObjectiveSpec(), 0.0, spec)
        x_ref = rng.normal(size=prob.layout.size) * 0.1
        rep.cases += 1
        for row in prob.magnitude_rows:
            c1, c2, c3 = check_surrogate_conditions(row, x_ref, rng, samples)
            rep.note("c1", c1)
            rep.note("c2", c2)
            rep.note("c3", c3)
    return rep


def linearization_suite(seed: int, cases: int = 50, config: SolverConfig = SolverConfig()) -> SuiteReport:
    """Worst exponential-vs-linear injection error at the solved voltages, at V_N and at 2 V_N.

    Records the largest ratio error(2 V_N) / error(V_N) over the cases.
    """
    from .loads import injection_error

    rng = np.random.default_rng(seed)
    rep = SuiteReport("linearization")
    while rep.cases < cases:
        model = random_network(rng, p_dg=0.0, p_cap=0.0, kappa=(1, 2))
        errs = []
        for m in (model, model.with_v_nominal(2 * model.v_nominal_kv)):
            sol = solve(build_problem(m, ObjectiveSpec(), 0.0), config)
            if sol.status != "optimal":
                break
            errs.append(max(injection_error(m, sol, closed=[l.key for l in m.lines]).values(), default=0.0))
        if len(errs) < 2 or errs[0] == 0.0:
            continue
        rep.cases += 1
        rep.note("ratio", errs[1] / errs[0])
    return rep


def check_surrogate_conditions(row, x_ref: np.ndarray, rng: np.random.Generator, samples: int = 1000, step: float = 1e-6):
    """(c1 violation, c2 gap, c3 gradient mismatch) of one magnitude surrogate at x_ref.

    c1 samples the surrogate against the true constraint around x_ref, c2
    compares values at x_ref and c3 compares central finite differences
    along a random unit direction.
    """
    spread = max(1.0, float(np.linalg.norm(x_ref)))
    xs = x_ref + rng.normal(size=(samples, len(x_ref))) * spread / math.sqrt(len(x_ref))
    v = row.c[:, None] + row.H @ xs.T
    true = row.lower**2 - np.sum(v * v, axis=0)
    a, b = row.surrogate_coefficients(x_ref)
    surr = (x_ref - xs) @ a - b + row.lower**2
    c1 = max(0.0, float(np.max(true - surr)))
    c2 = abs(row.surrogate(x_ref, x_ref) - row.lower_constraint(x_ref))
    d = rng.normal(size=len(x_ref))
    d /= np.linalg.norm(d)
    fd = (row.lower_constraint(x_ref + step * d) - row.lower_constraint(x_ref - step * d)) / (2 * step)
    sd = (row.surrogate(x_ref + step * d, x_ref) - row.surrogate(x_ref - step * d, x_ref)) / (2 * step)
    c3 = abs(fd - sd) / max(1.0, abs(fd))
    return c1, c2, c3


def sca_suite(seed: int, cases: int = 25, samples: int = 1000) -> SuiteReport:
    """Run the SCA loop on random instances whose lower magnitude bounds bind."""
    from .pipeline import ScaError, sca_solve

    rng = np.random.default_rng(seed)
    rep = SuiteReport("sca")
    while rep.cases < cases:
        inst = random_magnitude_instance(rng)
        if inst is None:
            continue
        model, spec = inst
        try:
            res = sca_solve(model, ObjectiveSpec(), 0.0, spec)
        except ScaError:
            rep.note("discarded_infeasible", rep.worst.get("discarded_infeasible", 0.0) + 1)
            continue
        rep.cases += 1
        objs = [h.objective for h in res.history]
        rise = max((b - a for a, b in zip(objs, objs[1:])), default=0.0)
        rep.note("objective_increase", max(0.0, rise) / max(1.0, abs(objs[0])))
        rep.note("iterations", res.iterations)
        if not res.converged:
            rep.failures.append((rep.cases, "not converged"))
        final = res.history[-1]
        rep.note("lower_violation", max(0.0, final.max_lower_violation))
        for step_ in res.history[1:]:
            for row in step_.problem.magnitude_rows:
                if row.lower > 0:
                    c1, c2, c3 = check_surrogate_conditions(row, step_.x, rng, samples)
                    rep.note("c1", c1)
                    rep.note("c2", c2)
                    rep.note("c3", c3)
    return rep
