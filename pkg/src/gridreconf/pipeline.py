"""Reconfiguration drivers built on the convex program.

Every loss quoted by these drivers is the refit loss: the selected topology is
re-solved with no sparsity penalty and the loss sum Re{i^H Z i} is reported
in watts.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import networkx as nx
import numpy as np

from .formulation import DsrProblem, ObjectiveSpec, VoltageSpec, build_problem
from .network import LineKey, NetworkModel, build_incidence, enumerate_cycles
from .solver import DsrSolution, SolverConfig, kkt_residuals, solve


class RefitError(ValueError):
    pass


class OracleGuardError(ValueError):
    pass


class ScaError(RuntimeError):
    def __init__(self, message: str, certificate: Optional[dict] = None):
        super().__init__(message)
        self.certificate = certificate or {}


def worker_count() -> int:
    """Parallel workers allowed by GRIDRECONF_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("GRIDRECONF_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: Sequence, workers: Optional[int]):
    workers = workers or worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# topology


@dataclass(frozen=True)
class Topology:
    closed: frozenset
    open_switches: frozenset
    radial: bool
    connected: bool
    switches: frozenset = frozenset()  # every switchable line of the model

    @classmethod
    def from_closed(cls, model: NetworkModel, closed: Iterable[LineKey]) -> "Topology":
        closed = frozenset(tuple(k) for k in closed)
        open_sw = frozenset(k for k in model.switch_keys if k not in closed)
        g = model.graph(closed)
        connected = nx.is_connected(g)
        radial = connected and len(closed) == len(model.nodes) - 1
        switches = frozenset(model.switch_keys)
        return cls(closed=closed, open_switches=open_sw, radial=radial, connected=connected, switches=switches)

    @property
    def closed_switches(self) -> frozenset:
        return self.closed & self.switches


def extract_topology(solution: DsrSolution, model: Optional[NetworkModel] = None, group_eps=None) -> Topology:
    """Open every switched line whose current block norm is at most the support threshold.

    ``model`` is the full network (defaults to the solved one); lines absent
    from the solved program count as open. ``group_eps`` overrides the
    solution's configured threshold (still scaled by sqrt(I_max) on capped lines).
    """
    model = model or solution.model
    xi = solution.xi
    closed = []
    for l in model.lines:
        if l.key not in xi:
            continue
        if not l.switchable:
            closed.append(l.key)
            continue
        thr = solution.group_threshold(l.key)
        if group_eps is not None:
            thr *= group_eps / solution.config.group_eps
        if np.linalg.norm(xi[l.key]) > thr:
            closed.append(l.key)
    return Topology.from_closed(model, closed)


def refit(
    model: NetworkModel,
    topology,
    objective: ObjectiveSpec = ObjectiveSpec(),
    config: SolverConfig = SolverConfig(),
    voltage: Optional[VoltageSpec] = None,
) -> tuple[DsrSolution, float]:
    """Solve the unpenalized program on the closed lines only; return (solution, loss in W)."""
    closed = topology.closed if isinstance(topology, Topology) else frozenset(topology)
    lost = model.unreachable(closed)
    if lost:
        raise RefitError(f"topology strands nodes {lost}")
    sub = model.with_lines(closed)
    sub = sub.with_switchable([l.key for l in sub.lines], False)
    problem = build_problem(sub, objective, 0.0, voltage or VoltageSpec())
    sol = solve(problem, config)
    loss = sol.loss_watts() if sol.status in ("optimal", "inaccurate") else math.nan
    return sol, loss


# ---------------------------------------------------------------------------
# lambda sweep


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    status: str
    topology: Optional[Topology]
    refit_loss_w: float
    refit_status: str
    regularized_loss_w: float  # loss term of the penalized optimum
    currents: Mapping[tuple[LineKey, str], float]  # |I| in amperes on switched line-phases
    wall_time: float
    solution: Optional[DsrSolution] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class SweepResult:
    points: tuple[SweepPoint, ...]
    switch_lines: tuple[LineKey, ...]

    @property
    def lambdas(self) -> list[float]:
        return [p.lam for p in self.points]

    def loss_curve(self) -> list[tuple[float, float]]:
        return [(p.lam, p.refit_loss_w) for p in self.points]

    def current_matrix(self) -> tuple[list[tuple[LineKey, str]], np.ndarray]:
        """Rows are switched line-phases, columns follow the lambda grid."""
        rows = []
        for p in self.points:
            for key in p.currents:
                if key not in rows:
                    rows.append(key)
        mat = np.array([[p.currents.get(r, math.nan) for p in self.points] for r in rows])
        return rows, mat

    def open_counts(self) -> list[int]:
        return [len(p.topology.open_switches) if p.topology else -1 for p in self.points]


def _switch_currents(solution: DsrSolution) -> dict:
    out = {}
    cur = solution.currents_si()
    for l in solution.model.lines:
        if l.switchable:
            xi = cur[l.key]
            k = len(l.phases)
            for j, p in enumerate(l.phases):
                out[(l.key, p)] = float(abs(complex(xi[j], xi[k + j])))
    return out


def lambda_sweep(
    model: NetworkModel,
    lambdas: Sequence[float],
    config: SolverConfig = SolverConfig(),
    objective: ObjectiveSpec = ObjectiveSpec(),
    voltage: Optional[VoltageSpec] = None,
    overrides: Optional[Mapping] = None,
    workers: Optional[int] = None,
    keep_solutions: bool = False,
) -> SweepResult:
    """Solve, extract and refit at every lambda; failures are recorded per point."""
    lambdas = [float(v) for v in lambdas]
    if len(lambdas) < 2 or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be strictly increasing with at least two entries")
    voltage = voltage or VoltageSpec()
    inc = build_incidence(model)

    def run(lam):
        start = time.perf_counter()
        problem = build_problem(model, objective, lam, voltage, overrides=overrides, incidence=inc)
        sol = solve(problem, config)
        if sol.status not in ("optimal", "inaccurate"):
            return SweepPoint(lam, sol.status, None, math.nan, "skipped", math.nan, {}, time.perf_counter() - start)
        topo = extract_topology(sol, model)
        try:
            # voltage limits shape the selection; the refit reports the topology's loss
            rsol, loss = refit(model, topo, objective, config)
            rstatus = rsol.status
        except Exception as exc:  # stranded nodes or voltage paths; recorded, sweep continues
            loss, rstatus = math.nan, f"error: {exc}"
        return SweepPoint(
            lam=lam,
            status=sol.status,
            topology=topo,
            refit_loss_w=loss,
            refit_status=rstatus,
            regularized_loss_w=sol.loss_watts(),
            currents=_switch_currents(sol),
            wall_time=time.perf_counter() - start,
            solution=sol if keep_solutions else None,
        )

    points = _map(run, lambdas, workers)
    return SweepResult(points=tuple(points), switch_lines=model.switch_keys)


# ---------------------------------------------------------------------------
# auto lambda


@dataclass(frozen=True)
class AutoLambdaResult:
    lam: float
    topology: Optional[Topology]
    achieved: bool
    bracket: tuple[float, int, float, int]  # (lam_low, closed_low, lam_high, closed_high)
    evaluations: int


def auto_lambda(
    model: NetworkModel,
    target_closed: int,
    bounds: tuple[float, float] = (0.0, 1e4),
    config: SolverConfig = SolverConfig(),
    objective: ObjectiveSpec = ObjectiveSpec(),
    overrides: Optional[Mapping] = None,
    max_bisections: int = 40,
) -> AutoLambdaResult:
    """Bisect lambda until the number of closed switches equals ``target_closed``.

    Keeps count(lam_low) >= target >= count(lam_high); bisection is geometric
    once the lower end is positive. When the target is skipped over (support
    is not guaranteed monotone) the final bracket is returned with
    ``achieved=False``.
    """
    n_sw = len(model.switch_keys)
    if not 0 <= target_closed <= n_sw:
        raise ValueError(f"target_closed must lie in [0, {n_sw}]")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not 0 <= lo < hi:
        raise ValueError("bounds must satisfy 0 <= low < high")
    inc = build_incidence(model)
    evals = 0

    def count(lam):
        nonlocal evals
        evals += 1
        sol = solve(build_problem(model, objective, lam, overrides=overrides, incidence=inc), config)
        if sol.status not in ("optimal", "inaccurate"):
            raise RuntimeError(f"solver status {sol.status} at lambda={lam}")
        topo = extract_topology(sol, model)
        return len(topo.closed_switches), topo

    c_lo, t_lo = count(lo)
    if c_lo == target_closed:
        return AutoLambdaResult(lo, t_lo, True, (lo, c_lo, lo, c_lo), evals)
    c_hi, t_hi = count(hi)
    if c_hi == target_closed:
        return AutoLambdaResult(hi, t_hi, True, (hi, c_hi, hi, c_hi), evals)
    if not c_lo >= target_closed >= c_hi:
        return AutoLambdaResult(math.nan, None, False, (lo, c_lo, hi, c_hi), evals)
    for _ in range(max_bisections):
        mid = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        c_mid, t_mid = count(mid)
        if c_mid == target_closed:
            return AutoLambdaResult(mid, t_mid, True, (lo, c_lo, hi, c_hi), evals)
        if c_mid > target_closed:
            lo, c_lo = mid, c_mid
        else:
            hi, c_hi = mid, c_mid
    return AutoLambdaResult(math.nan, None, False, (lo, c_lo, hi, c_hi), evals)


# ---------------------------------------------------------------------------
# successive convex approximation for magnitude bounds


@dataclass(frozen=True)
class ScaStep:
    iteration: int
    objective: float
    max_lower_violation: float  # max over node-phases of V_lo^2 - |V|^2
    max_upper_violation: float  # max over node-phases of |V| - V_hi
    status: str
    x: np.ndarray = field(repr=False, compare=False)
    problem: Optional[DsrProblem] = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class ScaResult:
    solution: DsrSolution
    history: tuple[ScaStep, ...]
    converged: bool
    phase_one_iterations: int

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def _violations(problem: DsrProblem, x: np.ndarray) -> tuple[float, float]:
    lower = upper = -math.inf
    for row in problem.magnitude_rows:
        if row.lower > 0:
            lower = max(lower, row.lower_constraint(x))
        if math.isfinite(row.upper):
            upper = max(upper, float(np.linalg.norm(row.value(x))) - row.upper)
    return lower, upper


def penalized_objective(problem: DsrProblem, x: np.ndarray) -> float:
    """Objective at x with every epigraph variable set to its group norm."""
    x = np.array(x, dtype=float)
    for k, c in problem.layout.t.items():
        x[c] = np.linalg.norm(x[problem.layout.xi[k]])
    return problem.form.objective(x)


def sca_solve(
    model: NetworkModel,
    objective: ObjectiveSpec,
    lam: float,
    voltage: VoltageSpec,
    config: SolverConfig = SolverConfig(),
    overrides: Optional[Mapping] = None,
    max_iter: int = 50,
    rel_tol: float = 1e-6,
) -> ScaResult:
    """Successive convex approximation for lower/upper bounds on voltage magnitudes.

    The starting point solves the program with upper bounds only; if it
    violates a lower bound, a slack-minimizing sequence of linearized
    programs is run first. Each iterate is feasible for the next surrogate,
    so the objective never increases.
    """
    if voltage.mode != "magnitude":
        raise ValueError("sca_solve expects a magnitude VoltageSpec")
    inc = build_incidence(model)

    def build(iterate, phase_one=False):
        return build_problem(
            model, objective, lam, voltage, iterate=iterate, overrides=overrides, phase_one=phase_one, incidence=inc
        )

    base = build(None)
    sol = solve(base, config)
    if sol.status not in ("optimal", "inaccurate"):
        raise ScaError("program with upper magnitude bounds has no solution", {"status": sol.status})
    x = np.array(sol.x)
    phase_one = 0
    feas_tol = 1e-9
    if _violations(base, x)[0] > feas_tol:
        prev = math.inf
        while True:
            phase_one += 1
            p1 = build(x, phase_one=True)
            s1 = solve(p1, config)
            if s1.status not in ("optimal", "inaccurate"):
                raise ScaError("feasibility program failed", {"status": s1.status, "iteration": phase_one})
            # slack columns trail the regular ones; drop them
            x = np.array(s1.x)[: base.layout.size]
            total = s1.objective
            if _violations(base, x)[0] <= feas_tol:
                break
            if phase_one >= max_iter or total >= prev - 1e-12:
                raise ScaError(
                    "no feasible starting point for the lower magnitude bounds",
                    {"slack": total, "iterations": phase_one, "max_violation": _violations(base, x)[0]},
                )
            prev = total
        sol = None

    obj = penalized_objective(base, x)
    lo_v, up_v = _violations(base, x)
    history = [ScaStep(0, obj, lo_v, up_v, "start", x.copy(), None)]
    converged = False
    last = sol
    for j in range(1, max_iter + 1):
        problem = build(x)
        s = solve(problem, config)
        if s.status not in ("optimal", "inaccurate"):
            history.append(ScaStep(j, math.nan, math.nan, math.nan, s.status, x.copy(), problem))
            break
        x_new = np.array(s.x)
        obj_new = penalized_objective(problem, x_new)
        lo_v, up_v = _violations(problem, x_new)
        history.append(ScaStep(j, obj_new, lo_v, up_v, s.status, x_new.copy(), problem))
        last = s
        change = abs(obj_new - obj) / max(1.0, abs(obj))
        x, obj = x_new, obj_new
        if change < rel_tol:
            converged = True
            break
    if last is None:
        raise ScaError("no subproblem could be solved", {"history": len(history)})
    return ScaResult(solution=last, history=tuple(history), converged=converged, phase_one_iterations=phase_one)


def sca_kkt_residual(solution: DsrSolution) -> float:
    """Stationarity/complementarity residual of the nonconvex magnitude program at the solution.

    The last subproblem's multipliers are reused with the linearized gradients
    replaced by the true gradients at the final point.
    """
    prob = solution.problem
    x = solution.x
    base = kkt_residuals(prob, x, solution.y, solution.z)
    if prob.iterate is None:
        return base.worst()
    rows = {key: r for kind, key, r in prob.registry.lp if kind == "vmag_lower"}
    corr = np.zeros_like(x)
    comp = 0.0
    for row in prob.magnitude_rows:
        key = (row.node, row.phase)
        if key not in rows:
            continue
        zi = solution.z[rows[key]]
        a_ref, _ = row.surrogate_coefficients(prob.iterate)
        a_now, _ = row.surrogate_coefficients(x)
        corr += zi * (a_ref - a_now)
        comp = max(comp, abs(zi * row.lower_constraint(x)))
    f = prob.form
    r = f.P @ x + f.q + f.A.T @ solution.y + f.G.T @ solution.z + corr
    scale = 1.0 + max(np.max(np.abs(f.q), initial=0.0), np.max(np.abs(f.P @ x), initial=0.0))
    stat = float(np.max(np.abs(r), initial=0.0)) / scale
    return max(base.primal, stat, comp / (1.0 + abs(solution.objective)), base.gap)


# ---------------------------------------------------------------------------
# exhaustive oracle and heuristic baseline


@dataclass(frozen=True)
class OracleResult:
    best_closed_switches: Optional[frozenset]
    best_topology: Optional[Topology]
    best_loss_w: float
    evaluated: int
    table: tuple  # (closed switch keys, loss W or nan, status)

    def assignment(self, model: NetworkModel) -> dict[LineKey, int]:
        """Binary x_mn per switch (1 closed) for the best configuration."""
        best = self.best_closed_switches or frozenset()
        return {k: int(k in best) for k in model.switch_keys}


def _satisfies_cycles(cycles, closed: frozenset) -> bool:
    return all(sum(1 for e in c if e in closed) <= len(c) - 1 for c in cycles)


def exhaustive_oracle(
    model: NetworkModel,
    objective: ObjectiveSpec = ObjectiveSpec(),
    radial_only: bool = False,
    config: SolverConfig = SolverConfig(),
    guard: int = 25,
    workers: Optional[int] = None,
) -> OracleResult:
    """Refit every switch assignment that serves all nodes and return the cheapest.

    With ``radial_only`` only assignments with |N|-1 closed lines that satisfy
    the cycle-basis constraints and are connected are kept (count plus
    connectivity is what makes the set exactly the spanning trees).
    """
    switches = list(model.switch_keys)
    if len(switches) > guard:
        raise OracleGuardError(
            f"{len(switches)} switches means {2 ** len(switches):,} assignments, above the guard of 2^{guard}"
        )
    fixed = frozenset(l.key for l in model.lines if not l.switchable)
    cycles = enumerate_cycles(model)
    if radial_only:
        need = len(model.nodes) - 1 - len(fixed)
        combos = itertools.combinations(switches, need) if 0 <= need <= len(switches) else []
    else:
        combos = itertools.chain.from_iterable(
            itertools.combinations(switches, r) for r in range(len(switches), -1, -1)
        )
    candidates = []
    for combo in combos:
        closed = fixed | frozenset(combo)
        if radial_only and not _satisfies_cycles(cycles, closed):
            continue
        if model.unreachable(closed):
            continue
        candidates.append(frozenset(combo))

    def run(combo):
        sol, loss = refit(model, fixed | combo, objective, config)
        return (combo, loss, sol.status)

    table = _map(run, candidates, workers)
    best = None
    for combo, loss, status in table:
        if status not in ("optimal", "inaccurate") or not math.isfinite(loss):
            continue
        if best is None or loss < best[1] - 1e-12 or (
            abs(loss - best[1]) <= 1e-12 and sorted(combo) < sorted(best[0])
        ):
            best = (combo, loss)
    if best is None:
        return OracleResult(None, None, math.inf, len(table), tuple(table))
    topo = Topology.from_closed(model, fixed | best[0])
    return OracleResult(best[0], topo, best[1], len(table), tuple(table))


@dataclass(frozen=True)
class BaselineResult:
    topology: Topology
    loss_w: float
    opened: tuple[LineKey, ...]
    iterations: int


def heuristic_baseline(
    model: NetworkModel, objective: ObjectiveSpec = ObjectiveSpec(), config: SolverConfig = SolverConfig()
) -> BaselineResult:
    """Open, one at a time, the closed switch carrying the least sum |I|^2 until radial.

    Only switches whose removal keeps every node served are candidates; ties
    go to the lowest line key. Currents are re-solved after each opening.
    """
    closed = set(l.key for l in model.lines)
    opened = []
    sol, loss = refit(model, closed, objective, config)
    while True:
        topo = Topology.from_closed(model, closed)
        if topo.radial:
            break
        g = model.graph(closed)
        bridges = {frozenset(e) for e in nx.bridges(g)}
        xi = sol.xi
        best = None
        for key in sorted(k for k in closed if model.line(k).switchable):
            if frozenset(key) in bridges:
                continue
            idx = float(xi[key] @ xi[key])
            if best is None or idx < best[1]:
                best = (key, idx)
        if best is None:
            break
        closed.remove(best[0])
        opened.append(best[0])
        sol, loss = refit(model, closed, objective, config)
    return BaselineResult(Topology.from_closed(model, closed), loss, tuple(opened), len(opened))
