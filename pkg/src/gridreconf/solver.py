"""Conic solve, dual recovery and closed-form optimality checks.

The interior-point engine is Clarabel. Residuals are recomputed here from the
returned primal/dual pair so the contract does not depend on the engine's own
stopping rule.

Multiplier conventions (per unit):
  * mu_n is the equality multiplier y of the KCL rows of node n, with the
    Lagrangian term y'(Ax - b); then Zbar xi = mu_mn at non-switched lines.
  * rho_mn^phi multiplies (xi' M xi - I_max)/2, i.e. rho = z0 / sqrt(I_max)
    for the cap cone (sqrt(I_max), [Re I^phi, Im I^phi]). With this scaling
    Ztilde = Zbar + sum rho M reproduces the optimal currents exactly.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional

import clarabel
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .formulation import DsrProblem
from .loads import linear_injection_pu
from .network import LineKey

STATUSES = ("optimal", "infeasible", "unbounded", "max_iter", "inaccurate")


class VerificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 200
    group_eps: float = 1e-6
    polish: bool = True  # active-set Newton refinement of the interior-point result

    def __post_init__(self):
        if not self.tol > 0 or not self.group_eps > 0 or self.max_iter < 1:
            raise ValueError("tol and group_eps must be positive, max_iter at least 1")


@dataclass(frozen=True)
class KKTResiduals:
    primal: float
    dual: float
    complementarity: float
    gap: float

    def worst(self) -> float:
        return max(self.primal, self.dual, self.complementarity, self.gap)


def _soc_project_violation(v: np.ndarray) -> float:
    return max(0.0, float(np.linalg.norm(v[1:]) - v[0]))


def kkt_residuals(problem: DsrProblem, x, y, z) -> KKTResiduals:
    """Relative residuals of Px + q + A'y + G'z = 0, Ax = b, h - Gx in K, z in K*."""
    f = problem.form
    px = f.P @ x
    ax = f.A @ x
    gx = f.G @ x
    s = f.h - gx
    l = f.n_nonneg
    cone_viol_s = max([0.0] + list(np.maximum(-s[:l], 0.0)))
    cone_viol_z = max([0.0] + list(np.maximum(-z[:l], 0.0)))
    start = l
    for d in f.soc_dims:
        cone_viol_s = max(cone_viol_s, _soc_project_violation(s[start : start + d]))
        cone_viol_z = max(cone_viol_z, _soc_project_violation(z[start : start + d]))
        start += d
    eq = np.max(np.abs(ax - f.b)) if len(f.b) else 0.0
    prim_scale = 1.0 + max(np.max(np.abs(f.b), initial=0.0), np.max(np.abs(f.h), initial=0.0))
    primal = max(eq, cone_viol_s) / prim_scale
    r = px + f.q + f.A.T @ y + f.G.T @ z
    dual_scale = 1.0 + max(np.max(np.abs(f.q), initial=0.0), np.max(np.abs(px), initial=0.0))
    dual = max(float(np.max(np.abs(r), initial=0.0)), cone_viol_z) / dual_scale
    pobj = 0.5 * x @ px + f.q @ x
    dobj = -0.5 * x @ px - f.b @ y - f.h @ z
    comp = abs(float(s @ z)) / (1.0 + abs(pobj))
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return KKTResiduals(float(primal), float(dual), float(comp), float(gap))


@dataclass(frozen=True, eq=False)
class DsrSolution:
    problem: DsrProblem
    status: str
    x: np.ndarray
    y: np.ndarray  # equality multipliers
    z: np.ndarray  # conic multipliers
    objective: float  # per unit, problem units
    kkt: KKTResiduals
    iterations: int
    solve_time: float
    config: SolverConfig

    @property
    def model(self):
        return self.problem.model

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    # primal pieces, keyed by line key / node id
    @property
    def xi(self) -> dict[LineKey, np.ndarray]:
        lines = self.model.lines
        return {lines[k].key: self.x[s] for k, s in self.problem.layout.xi.items()}

    @property
    def sigma_g(self) -> dict[int, np.ndarray]:
        return {n: self.x[s] for n, s in self.problem.layout.sigma.items()}

    @property
    def t(self) -> dict[LineKey, float]:
        lines = self.model.lines
        return {lines[k].key: float(self.x[c]) for k, c in self.problem.layout.t.items()}

    @property
    def mu(self) -> dict[int, np.ndarray]:
        return {n: self.y[s] for n, s in self.problem.registry.kcl.items()}

    @property
    def rho(self) -> dict[tuple[LineKey, str], float]:
        out = {}
        model = self.model
        for cone in self.problem.registry.cones:
            if cone.kind != "cap":
                continue
            k, j = cone.key
            l = model.lines[k]
            cap = math.sqrt(model.i_max_pu(l))
            z0 = max(float(self.z[cone.start]), 0.0)
            out[(l.key, l.phases[j])] = z0 / cap if cap > 0 else 0.0
        return out

    def group_threshold(self, key: LineKey) -> float:
        l = self.model.line(key)
        eps = self.config.group_eps
        if math.isfinite(l.i_max) and l.i_max > 0:
            eps *= math.sqrt(self.model.i_max_pu(l))
        return eps

    def closed_lines(self) -> list[LineKey]:
        out = []
        for key, xi in self.xi.items():
            l = self.model.line(key)
            if not l.switchable or np.linalg.norm(xi) > self.group_threshold(key):
                out.append(key)
        return out

    # SI views
    def currents_si(self) -> dict[LineKey, np.ndarray]:
        ib = self.model.i_base
        return {k: v * ib for k, v in self.xi.items()}

    def dg_setpoints_si(self) -> dict[int, np.ndarray]:
        sb = self.model.s_base
        return {n: v * sb for n, v in self.sigma_g.items() if not self.model.node(n).is_substation}

    def injections_si(self) -> dict[int, np.ndarray]:
        """Linearized injected current G sigma + h per node, in amperes."""
        out = {}
        sig = self.sigma_g
        for n in self.model.nodes:
            g, h = linear_injection_pu(n, self.model)
            iota = h.copy()
            if n.id in sig:
                iota = iota + g @ sig[n.id]
            out[n.id] = iota * self.model.i_base
        return out

    def loss_watts(self) -> float:
        return self.problem.loss_watts(self.x)

    @property
    def objective_si(self) -> float:
        return self.objective * self.model.s_base

    def to_dict(self) -> dict:
        """Structured record with primal values, all multipliers and residuals."""
        m = self.model
        return {
            "status": self.status,
            "objective_pu": self.objective,
            "loss_w": self.loss_watts() if self.x.size else None,
            "iterations": self.iterations,
            "solve_time_s": self.solve_time,
            "kkt": self.kkt.__dict__,
            "xi_pu": {f"{k[0]}-{k[1]}": v.tolist() for k, v in self.xi.items()},
            "current_amp": {f"{k[0]}-{k[1]}": np.abs(_cplx(v)).tolist() for k, v in self.currents_si().items()},
            "sigma_pu": {str(n): v.tolist() for n, v in self.sigma_g.items()},
            "t_pu": {f"{k[0]}-{k[1]}": v for k, v in self.t.items()},
            "mu_pu": {str(n): v.tolist() for n, v in self.mu.items()},
            "rho": {f"{k[0]}-{k[1]}.{p}": v for (k, p), v in self.rho.items()},
            "y": self.y.tolist(),
            "z": self.z.tolist(),
            "bases": {"v_base": m.v_base, "s_base": m.s_base, "i_base": m.i_base},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


def _cplx(xi: np.ndarray) -> np.ndarray:
    k = len(xi) // 2
    return xi[:k] + 1j * xi[k:]


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "max_iter",
    "MaxTime": "max_iter",
}


POLISH_TARGET = 1e-12  # KKT level at which a polished solution needs no second look
TIGHT_INNER_TOL = 1e-12


def _run_engine(problem: DsrProblem, config: SolverConfig, inner: float):
    """One interior-point run; returns (status, x, y, z, iterations)."""
    f = problem.form
    m_eq = f.A.shape[0]
    a = sp.vstack([f.A, f.G]).tocsc()
    b = np.concatenate([f.b, f.h])
    cones = []
    if m_eq:
        cones.append(clarabel.ZeroConeT(m_eq))
    if f.n_nonneg:
        cones.append(clarabel.NonnegativeConeT(f.n_nonneg))
    cones += [clarabel.SecondOrderConeT(d) for d in f.soc_dims]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = config.max_iter
    settings.tol_gap_abs = inner
    settings.tol_gap_rel = inner
    settings.tol_feas = inner
    settings.tol_ktratio = 1e-7
    settings.max_threads = 1
    engine = clarabel.DefaultSolver(sp.triu(f.P).tocsc(), f.q, a, b, cones, settings)
    out = engine.solve()
    raw = str(out.status).split(".")[-1]
    zz = np.array(out.z)
    return _STATUS_MAP.get(raw, "max_iter"), np.array(out.x), zz[:m_eq], zz[m_eq:], int(out.iterations)


def _polished(problem: DsrProblem, status, x, y, z, kkt):
    refined = polish(problem, x, y, z)
    if refined is not None:
        k2 = kkt_residuals(problem, *refined)
        if k2.worst() < kkt.worst():
            return "optimal", *refined, k2
    return status, x, y, z, kkt


def solve(problem: DsrProblem, config: SolverConfig = SolverConfig()) -> DsrSolution:
    """Solve the conic program and package primal values, multipliers and residuals.

    A solve reported optimal by the engine is accepted only if the recomputed
    relative residuals are within ``config.tol``; otherwise it is marked
    ``inaccurate``. Infeasible and unbounded programs return certificates in
    ``y``/``z`` and never a numeric optimum.
    """
    f = problem.form
    start = time.perf_counter()
    inner = min(config.tol * 0.1, 1e-9)
    status, x, y, z, iterations = _run_engine(problem, config, inner)
    kkt = kkt_residuals(problem, x, y, z)
    if config.polish and status in ("optimal", "inaccurate"):
        status, x, y, z, kkt = _polished(problem, status, x, y, z, kkt)
        if kkt.worst() > POLISH_TARGET:
            # an iterate near a cone apex can defeat the Newton step; a tighter
            # interior-point run gives it a start it can handle
            again = _run_engine(problem, config, TIGHT_INNER_TOL)
            if again[0] in ("optimal", "inaccurate"):
                cand = _polished(problem, again[0], *again[1:4], kkt_residuals(problem, *again[1:4]))
                if cand[4].worst() < kkt.worst():
                    status, x, y, z, kkt = cand
                    iterations += again[4]
    elapsed = time.perf_counter() - start
    if status == "optimal" and kkt.worst() > config.tol:
        status = "inaccurate"
    obj = f.objective(x) if status in ("optimal", "inaccurate", "max_iter") else float("nan")
    for arr in (x, y, z):
        arr.setflags(write=False)
    return DsrSolution(
        problem=problem,
        status=status,
        x=x,
        y=y,
        z=z,
        objective=obj,
        kkt=kkt,
        iterations=iterations,
        solve_time=elapsed,
        config=config,
    )


# ---------------------------------------------------------------------------
# active-set polish


def _cone_blocks(form) -> list[slice]:
    out, start = [], form.n_nonneg
    for d in form.soc_dims:
        out.append(slice(start, start + d))
        start += d
    return out


def _active_sets(form, x, s, z):
    """Candidate (LP rows, apex rows, boundary blocks) guesses, most likely first.

    The first guess compares slack and multiplier of every constraint. Near
    the apex an unconverged iterate can still show a small nonzero group on
    the boundary; the later guesses pin such near-zero boundary blocks at the
    apex instead.
    """
    l = form.n_nonneg
    lp_active = [i for i in range(l) if z[i] > s[i]]
    zero_rows, boundary = [], []
    for blk in _cone_blocks(form):
        sb, zb = s[blk], z[blk]
        ns = sb[0] - np.linalg.norm(sb[1:])
        nz = zb[0] - np.linalg.norm(zb[1:])
        if zb[0] < ns:
            continue
        if sb[0] < nz:
            zero_rows.extend(range(blk.start, blk.stop))
        elif sb[0] > 0 and zb[0] > 0:
            boundary.append(blk)
        else:
            return []
    out = [(lp_active, zero_rows, boundary)]
    scale = max(float(np.max(np.abs(x), initial=0.0)), 1e-300)
    for rel in (1e-4, 1e-3, 1e-2):
        tiny = [blk for blk in boundary if s[blk][0] <= rel * scale]
        if not tiny:
            continue
        keep = [blk for blk in boundary if s[blk][0] > rel * scale]
        pinned = zero_rows + [i for blk in tiny for i in range(blk.start, blk.stop)]
        guess = (lp_active, sorted(pinned), keep)
        if guess not in out:
            out.append(guess)
    return out


def polish(problem: DsrProblem, x, y, z, steps: int = 6):
    """Refine an interior-point primal/dual pair by Newton steps on the identified active set.

    LP rows are active when their multiplier exceeds their slack. A cone is
    inactive (multiplier zero), pinned at the apex (s = 0, e.g. an open
    switch), or on its boundary, where ||s1|| - s0 = 0 is kept as a smooth
    equality. Interior-point multipliers are only accurate to about the
    solver tolerance, which the thresholding closed forms amplify near
    ||mu|| = lambda; polishing restores full precision. Several active-set
    guesses are tried and the one with the smallest KKT residual wins.
    Returns (x, y, z) or None when no guess gives a Newton solution.
    """
    s = problem.form.h - problem.form.G @ x
    best, best_res = None, math.inf
    for lp_active, zero_rows, boundary in _active_sets(problem.form, x, s, z):
        got = _newton_polish(problem, x, y, z, lp_active, zero_rows, boundary, steps)
        if got is None:
            continue
        res = kkt_residuals(problem, *got).worst()
        if res < best_res:
            best, best_res = got, res
        if best_res <= POLISH_TARGET:
            break
    return best


def _kkt_step(kkt, n: int, rhs: np.ndarray, refine: int = 4) -> np.ndarray:
    """Solve the Newton system; redundant rows make it singular, so fall back
    to a slightly regularized factorization plus iterative refinement."""
    try:
        return spla.splu(kkt).solve(rhs)
    except RuntimeError:
        pass
    reg = np.zeros(kkt.shape[0])
    reg[:n] = 1e-13
    reg[n:] = -1e-13
    lu = spla.splu((kkt + sp.diags(reg)).tocsc())
    step = lu.solve(rhs)
    for _ in range(refine):
        step = step + lu.solve(rhs - kkt @ step)
    return step


def _newton_polish(problem: DsrProblem, x, y, z, lp_active, zero_rows, boundary, steps):
    f = problem.form
    n = len(x)
    G = f.G.tocsr()
    A = f.A.toarray()
    P = f.P.toarray()
    lin = lp_active + zero_rows
    Glin = G[lin].toarray() if lin else np.zeros((0, n))
    hlin = f.h[lin]
    Gd = [(G[blk].toarray(), f.h[blk]) for blk in boundary]
    m_eq, m_lin, m_b = A.shape[0], len(lin), len(boundary)

    def phi(i, xx):
        g, h = Gd[i]
        sv = h - g @ xx
        r = np.linalg.norm(sv[1:])
        grad = g[0] - g[1:].T @ (sv[1:] / r)
        return r - sv[0], grad, sv, r

    xx = np.array(x, dtype=float)
    yy = np.array(y, dtype=float)
    ww = np.array(z[lin], dtype=float)
    nu = np.array([z[blk][0] for blk in boundary], dtype=float)
    for _ in range(steps):
        rows_c, grads, hess = [], [], P.copy()
        for i in range(m_b):
            val, grad, sv, r = phi(i, xx)
            if r <= 1e-300:
                return None
            rows_c.append(val)
            grads.append(grad)
            u = sv[1:] / r
            g1 = Gd[i][0][1:]
            hess += nu[i] * g1.T @ ((np.eye(len(u)) - np.outer(u, u)) / r) @ g1
        J = np.vstack([A, Glin] + ([np.array(grads)] if m_b else []))
        mult = np.concatenate([yy, ww, nu])
        r_x = P @ xx + f.q + J.T @ mult
        r_c = np.concatenate([A @ xx - f.b, Glin @ xx - hlin, np.array(rows_c)])
        rhs = -np.concatenate([r_x, r_c])
        if np.max(np.abs(rhs), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(f.q), initial=0.0)):
            break
        kkt = sp.bmat([[sp.csc_matrix(hess), sp.csc_matrix(J.T)], [sp.csc_matrix(J), None]], format="csc")
        step = _kkt_step(kkt, n, rhs)
        if not np.all(np.isfinite(step)):
            return None
        xx = xx + step[:n]
        mult = mult + step[n:]
        yy, ww, nu = mult[:m_eq], mult[m_eq : m_eq + m_lin], mult[m_eq + m_lin :]
    if np.any(nu < 0) or np.any(ww[: len(lp_active)] < 0):
        return None
    zz = np.zeros_like(np.asarray(z, dtype=float))
    zz[lin] = ww
    for i, blk in enumerate(boundary):
        _, _, sv, r = phi(i, xx)
        zz[blk] = nu[i] * np.concatenate([[1.0], -sv[1:] / r])
    return xx, yy, zz


# ---------------------------------------------------------------------------
# closed-form checks


def line_dual_drive(solution: DsrSolution, k: int) -> np.ndarray:
    """mu_mn = Abar_m' mu_m - Abar_n' mu_n, minus any voltage-constraint terms on xi_mn.

    Voltage constraints make xi_mn appear in extra rows; their multipliers act
    like an additional potential difference and are folded in here so the
    closed forms keep holding with box or magnitude constraints present.
    """
    prob = solution.problem
    l = prob.model.lines[k]
    mu = solution.mu
    m, n = l.key
    drive = prob.abar(m, k).T @ mu[m] - prob.abar(n, k).T @ mu[n]
    s = prob.layout.xi[k]
    g = prob.form.G[:, s]
    extra_rows = [rows for kind, _, rows in prob.registry.lp if kind.startswith("v")]
    for cone in prob.registry.cones:
        if cone.kind == "vmag_upper":
            extra_rows.extend(range(cone.start, cone.start + cone.size))
    if extra_rows:
        rows = np.array(extra_rows)
        drive = drive - g[rows, :].T @ solution.z[rows]
    return np.asarray(drive).ravel()


def ztilde(solution: DsrSolution, k: int) -> np.ndarray:
    """Objective curvature of line k plus the cap multipliers, sum rho M."""
    prob = solution.problem
    s = prob.layout.xi[k]
    z = prob.form.P[s, s].toarray()
    l = prob.model.lines[k]
    rho = solution.rho
    for j, p in enumerate(l.phases):
        r = rho.get((l.key, p), 0.0)
        if r:
            z = z + r * prob.mbar(k, j)
    return z


def _relative(xi: np.ndarray, pred: np.ndarray, scale: float) -> float:
    denom = max(np.linalg.norm(xi), np.linalg.norm(pred), 1e-3 * scale, 1e-12)
    return float(np.linalg.norm(xi - pred) / denom)


def _current_scale(solution: DsrSolution) -> float:
    return max((float(np.linalg.norm(v)) for v in solution.xi.values()), default=0.0)


def _check_optimal(solution: DsrSolution):
    if solution.status not in ("optimal", "inaccurate"):
        raise VerificationError(f"cannot verify a solution with status {solution.status}")


def prop1_residuals(solution: DsrSolution) -> dict[LineKey, float]:
    """Per non-switched line ||xi - Ztilde^{-1} mu_mn|| relative to the current scale."""
    _check_optimal(solution)
    prob = solution.problem
    scale = _current_scale(solution)
    out = {}
    for k, l in enumerate(prob.model.lines):
        if k in prob.layout.t:
            continue
        pred = np.linalg.solve(ztilde(solution, k), line_dual_drive(solution, k))
        out[l.key] = _relative(solution.x[prob.layout.xi[k]], pred, scale)
    return out


def verify_prop1(solution: DsrSolution, problem: Optional[DsrProblem] = None) -> float:
    """Worst relative deviation from xi = Ztilde^{-1} mu_mn over lines without a group penalty.

    Relative deviations use max(|xi|, |predicted|, 1e-3 * largest line current)
    as denominator so that nearly idle lines do not dominate.
    """
    return max(prop1_residuals(solution).values(), default=0.0)


def solve_eta(mu: np.ndarray, z: np.ndarray, lam: float) -> float:
    """Minimizer over eta >= 0 of eta - (eta/2) mu'(eta Z + lam^2/2 I)^{-1} mu.

    The derivative 1 - (lam^2/4)|(eta Z + lam^2/2 I)^{-1} mu|^2 is increasing,
    so the minimizer is 0 when |mu| <= lam and otherwise the derivative root,
    bracketed by doubling from eta = 1 and refined with Brent's method.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    mu = np.asarray(mu, dtype=float)
    if np.linalg.norm(mu) <= lam:
        return 0.0
    w, v = np.linalg.eigh(0.5 * (z + z.T))
    if w.min() <= 0:
        raise ValueError("Z must be positive definite")
    c = v.T @ mu
    half = lam * lam / 2.0

    def deriv(eta):
        return 1.0 - (lam * lam / 4.0) * float(np.sum((c / (eta * w + half)) ** 2))

    # deriv(0) = 1 - |mu|^2 / lam^2 < 0 here
    hi = 1.0
    for _ in range(1100):
        if deriv(hi) >= 0:
            break
        hi *= 2.0
    else:
        raise VerificationError(f"eta bracket not found: derivative at {hi:g} is {deriv(hi):g}")
    return float(brentq(deriv, 0.0, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500))


def predicted_switched_current(mu: np.ndarray, z: np.ndarray, lam: float) -> np.ndarray:
    """Shrinkage/thresholding map from the dual drive to the optimal currents."""
    if lam <= 0:
        return np.linalg.solve(z, mu)
    nm = np.linalg.norm(mu)
    if nm <= lam:
        return np.zeros_like(mu)
    if len(mu) == 2 and np.allclose(z, z[0, 0] * np.eye(2), rtol=0, atol=1e-14 * abs(z[0, 0])):
        return (nm - lam) / (z[0, 0] * nm) * mu
    eta = solve_eta(mu, z, lam)
    return eta * np.linalg.solve(eta * z + 0.5 * lam * lam * np.eye(len(mu)), mu)


def prop2_residuals(solution: DsrSolution) -> dict[LineKey, float]:
    _check_optimal(solution)
    prob = solution.problem
    scale = _current_scale(solution)
    out = {}
    for k, l in enumerate(prob.model.lines):
        if not l.switchable:
            continue
        lam = prob.lambda_pu(k)
        pred = predicted_switched_current(line_dual_drive(solution, k), ztilde(solution, k), lam)
        out[l.key] = _relative(solution.x[prob.layout.xi[k]], pred, scale)
    return out


def verify_prop2(solution: DsrSolution, problem: Optional[DsrProblem] = None, lam=None) -> float:
    """Worst relative deviation from the thresholding closed forms over switched lines.

    Per-line weights are taken from the problem; ``lam`` is accepted for
    interface symmetry and ignored.
    """
    return max(prop2_residuals(solution).values(), default=0.0)


def complementarity_caps(solution: DsrSolution) -> float:
    """max rho * |xi' M xi - I_max| over capped line-phases (per unit)."""
    worst = 0.0
    model = solution.model
    for (key, p), r in solution.rho.items():
        l = model.line(key)
        j = l.phases.index(p)
        xi = solution.xi[key]
        val = xi[j] ** 2 + xi[len(l.phases) + j] ** 2
        worst = max(worst, r * abs(val - model.i_max_pu(l)))
    return worst


def strict_feasibility_margin(problem: DsrProblem, config: SolverConfig = SolverConfig()) -> float:
    """Largest tau such that caps and DG boxes hold with slack tau (capped at 1).

    A positive value indicates Slater's condition; values below 1e-6 are
    reported as a warning by callers. Voltage rows are ignored.
    """
    f = problem.form
    n = f.G.shape[1]
    lp_rows = [r for kind, _, r in problem.registry.lp if kind.startswith("dg")]
    cap_cones = [c for c in problem.registry.cones if c.kind == "cap"]
    if not lp_rows and not cap_cones:
        return math.inf
    g = f.G.tocsr()
    tau_col = sp.csc_matrix(np.ones((1, 1)))
    rows_g, rows_h = [], []
    for r in lp_rows:
        rows_g.append(sp.hstack([g[r], sp.csr_matrix([[1.0]])]))
        rows_h.append(f.h[r])
    rows_g.append(sp.hstack([sp.csr_matrix((1, n)), tau_col]))  # tau <= 1
    rows_h.append(1.0)
    soc_dims = []
    for c in cap_cones:
        block = g[c.start : c.start + c.size]
        first = sp.hstack([block[0], sp.csr_matrix([[1.0]])])
        rest = sp.hstack([block[1:], sp.csr_matrix((c.size - 1, 1))])
        rows_g += [first, rest]
        rows_h += list(f.h[c.start : c.start + c.size])
        soc_dims.append(c.size)
    G = sp.vstack(rows_g).tocsc()
    h = np.array(rows_h)
    A = sp.hstack([f.A, sp.csc_matrix((f.A.shape[0], 1))]).tocsc()
    q = np.zeros(n + 1)
    q[-1] = -1.0
    cones = []
    if A.shape[0]:
        cones.append(clarabel.ZeroConeT(A.shape[0]))
    cones.append(clarabel.NonnegativeConeT(len(lp_rows) + 1))
    cones += [clarabel.SecondOrderConeT(d) for d in soc_dims]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = config.max_iter
    out = clarabel.DefaultSolver(
        sp.csc_matrix((n + 1, n + 1)), q, sp.vstack([A, G]).tocsc(), np.concatenate([f.b, h]), cones, settings
    ).solve()
    if str(out.status).split(".")[-1] not in ("Solved", "AlmostSolved"):
        return -math.inf
    return float(out.x[-1])
