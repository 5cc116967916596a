"""Assembly of the group-sparse reconfiguration program in standard conic form.

    minimize    1/2 x'Px + q'x
    subject to  Ax = b
                Gx + s = h,   s in R_+^l x SOC(d_1) x ... x SOC(d_k)

Variables are the stacked line currents xi (per unit), the complex power of
the substation and of every DG unit, and one epigraph scalar t per switched
line with a positive weight. Everything is per unit on the model bases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .loads import linear_injection_pu
from .network import (
    IncidenceMap,
    LineKey,
    NetworkModel,
    SwitchFreePath,
    build_incidence,
    nominal_phasor,
    switch_free_path,
)

OBJECTIVES = ("loss", "operational", "balancing", "mixed")
VOLTAGE_MODES = ("none", "box", "magnitude")


class FormulationError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = "loss"
    c0: float = 1.0  # cost per watt of losses (operational)
    mix_weight: float = 0.5
    balance_set: Optional[frozenset] = None  # defaults to every capped line

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise FormulationError(f"unknown objective {self.kind!r}")
        if not 0.0 <= self.mix_weight <= 1.0:
            raise FormulationError("mix_weight must lie in [0, 1]")


@dataclass(frozen=True)
class VoltageSpec:
    """Voltage constraints, all in per unit of the phase voltage base.

    box: ``lower``/``upper`` map node ids to stacked [Re; Im] bounds on nu_n.
    magnitude: ``lower``/``upper`` map node ids to scalar bounds on |V_n^phi|.
    """

    mode: str = "none"
    lower: Mapping[int, object] = field(default_factory=dict)
    upper: Mapping[int, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in VOLTAGE_MODES:
            raise FormulationError(f"unknown voltage mode {self.mode!r}")
        if self.mode == "magnitude":
            for n in set(self.lower) | set(self.upper):
                lo, hi = self.lower.get(n, 0.0), self.upper.get(n, math.inf)
                if lo <= 0 and n in self.lower or lo > hi:
                    raise FormulationError(f"node {n}: need 0 < lower <= upper magnitude")
        if self.mode == "box":
            for n in set(self.lower) & set(self.upper):
                if np.any(np.asarray(self.lower[n]) > np.asarray(self.upper[n])):
                    raise FormulationError(f"node {n}: box lower bound exceeds upper bound")

    @property
    def nodes(self) -> list[int]:
        return sorted(set(self.lower) | set(self.upper))

    @classmethod
    def box_around_nominal(cls, model: NetworkModel, delta: float, nodes=None) -> "VoltageSpec":
        """Re/Im of every phase within +-delta of the nominal phasor."""
        lo, hi = {}, {}
        for n in model.nodes:
            if n.is_substation or (nodes is not None and n.id not in nodes):
                continue
            nu = stacked_nominal(n.phases)
            lo[n.id], hi[n.id] = nu - delta, nu + delta
        return cls("box", lo, hi)

    @classmethod
    def magnitude_bounds(cls, model: NetworkModel, vmin: float, vmax: float, nodes=None) -> "VoltageSpec":
        ids = [n.id for n in model.nodes if not n.is_substation and (nodes is None or n.id in nodes)]
        return cls("magnitude", {i: vmin for i in ids}, {i: vmax for i in ids})


def stacked_nominal(phases) -> np.ndarray:
    z = np.array([nominal_phasor(p) for p in phases])
    return np.concatenate([z.real, z.imag])


def psi_matrix(z: np.ndarray) -> np.ndarray:
    """Real form of complex multiplication by Z acting on [Re; Im]."""
    return np.block([[z.real, -z.imag], [z.imag, z.real]])


def phase_map(rows, cols) -> np.ndarray:
    """0/1 matrix copying entries of phase set ``cols`` into positions of ``rows``."""
    m = np.zeros((len(rows), len(cols)))
    for j, p in enumerate(cols):
        if p in rows:
            m[rows.index(p), j] = 1.0
    return m


def line_lambdas(model: NetworkModel, lam: float, overrides: Optional[Mapping] = None) -> dict[LineKey, float]:
    """Per switched line weight in volts: override > lambda_weight > global value."""
    if lam < 0:
        raise FormulationError("lambda must be nonnegative")
    overrides = {tuple(k): float(v) for k, v in (overrides or {}).items()}
    out = {}
    for l in model.lines:
        if not l.switchable:
            continue
        if l.key in overrides:
            out[l.key] = overrides[l.key]
        elif l.lambda_weight is not None:
            out[l.key] = l.lambda_weight
        else:
            out[l.key] = lam
        if out[l.key] < 0:
            raise FormulationError(f"line {l.key}: negative lambda")
    return out


@dataclass(frozen=True)
class Layout:
    size: int
    xi: Mapping[int, slice]  # line index -> columns
    sigma: Mapping[int, slice]  # node id -> columns (substation and DG nodes)
    t: Mapping[int, int]  # line index -> column
    slack: Mapping[tuple[int, str], int] = field(default_factory=dict)


@dataclass(frozen=True)
class ConicForm:
    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    n_nonneg: int
    soc_dims: tuple[int, ...]
    names: tuple[str, ...] = ()

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def to_dict(self) -> dict:
        def trip(m):
            c = m.tocoo()
            return {"shape": list(c.shape), "row": c.row.tolist(), "col": c.col.tolist(), "val": c.data.tolist()}

        return {
            "variables": list(self.names),
            "P": trip(self.P),
            "q": self.q.tolist(),
            "A": trip(self.A),
            "b": self.b.tolist(),
            "G": trip(self.G),
            "h": self.h.tolist(),
            "cones": {"zero": int(self.A.shape[0]), "nonneg": self.n_nonneg, "soc": list(self.soc_dims)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class Cone:
    kind: str  # group | cap | vmag_upper
    key: tuple
    start: int  # first row in G
    size: int


@dataclass(frozen=True)
class Registry:
    kcl: Mapping[int, slice]  # node id -> rows of A
    dg_fixed: tuple  # rows of A pinning DG coordinates
    lp: tuple  # (kind, key, rows) in the nonnegative block of G
    cones: tuple[Cone, ...]


@dataclass(frozen=True)
class MagnitudeRow:
    """Affine phase voltage v(xi) = c + H xi (2-vector) with bounds on its norm."""

    node: int
    phase: str
    c: np.ndarray
    H: sp.csr_matrix  # 2 x n, acting on the full variable vector
    lower: float
    upper: float

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.c + self.H @ x

    def lower_constraint(self, x: np.ndarray) -> float:
        """f(x) = V_lo^2 - |v(x)|^2 (feasible when <= 0)."""
        v = self.value(x)
        return self.lower**2 - float(v @ v)

    def surrogate(self, x: np.ndarray, x_ref: np.ndarray) -> float:
        """Linearization of lower_constraint at x_ref: a'(x_ref - x) - b + V_lo^2."""
        a, b = self.surrogate_coefficients(x_ref)
        return float(a @ (x_ref - x)) - b + self.lower**2

    def surrogate_coefficients(self, x_ref: np.ndarray) -> tuple[np.ndarray, float]:
        v = self.value(x_ref)
        return 2.0 * (self.H.T @ v), float(v @ v)


@dataclass(frozen=True)
class DsrProblem:
    model: NetworkModel
    incidence: IncidenceMap
    objective: ObjectiveSpec
    lam: float
    lambdas: Mapping[LineKey, float]  # per switched line, volts
    voltage: VoltageSpec
    layout: Layout
    form: ConicForm
    registry: Registry
    paths: Mapping[int, SwitchFreePath]
    magnitude_rows: tuple[MagnitudeRow, ...] = ()
    iterate: Optional[np.ndarray] = None
    phase_one: bool = False
    overrides: Optional[Mapping] = None

    # per-line matrices (per unit)
    def zbar(self, k: int) -> np.ndarray:
        l = self.model.lines[k]
        return np.kron(np.eye(2), self.model.z_pu(l).real)

    def mbar(self, k: int, j: int) -> np.ndarray:
        p = len(self.model.lines[k].phases)
        e = np.zeros((p, p))
        e[j, j] = 1.0
        return np.kron(np.eye(2), e)

    def abar(self, node: int, k: int) -> np.ndarray:
        return self.incidence.stacked(node, k)

    def psi(self, k: int) -> np.ndarray:
        return psi_matrix(self.model.z_pu(self.model.lines[k]))

    def lambda_pu(self, k: int) -> float:
        return self.lambdas.get(self.model.lines[k].key, 0.0) / self.model.v_base

    def xi_of(self, x: np.ndarray) -> dict[int, np.ndarray]:
        return {k: x[s] for k, s in self.layout.xi.items()}

    def loss_pu(self, x: np.ndarray) -> float:
        """Total active loss sum xi' Zbar xi in per unit."""
        total = 0.0
        for k, s in self.layout.xi.items():
            xi = x[s]
            total += float(xi @ self.zbar(k) @ xi)
        return total

    def loss_watts(self, x: np.ndarray) -> float:
        return self.loss_pu(x) * self.model.s_base


def _voltage_map(model: NetworkModel, layout: Layout, path: SwitchFreePath, n: int) -> tuple[np.ndarray, sp.csr_matrix]:
    """(c, H) with nu_n = c + H x for the stacked node voltage (per unit)."""
    phases = model.node(n).phases
    p = len(phases)
    c = stacked_nominal(phases)
    rows, cols, vals = [], [], []
    for k, alpha in path.edges:
        l = model.lines[k]
        sel = np.kron(np.eye(2), phase_map(phases, l.phases))
        block = alpha * sel @ psi_matrix(model.z_pu(l))
        s = layout.xi[k]
        r, cc = np.nonzero(block)
        rows.extend(r.tolist())
        cols.extend((cc + s.start).tolist())
        vals.extend(block[r, cc].tolist())
    h = sp.csr_matrix((vals, (rows, cols)), shape=(2 * p, layout.size))
    h.sum_duplicates()
    return c, h


class _Builder:
    def __init__(self, n: int):
        self.n = n
        self.a_rows, self.b = [], []
        self.lp_rows, self.lp_h = [], []
        self.soc_rows, self.soc_h = [], []
        self.soc_dims = []

    @staticmethod
    def _row(entries: dict) -> dict:
        return {c: v for c, v in entries.items() if v != 0}

    def eq(self, entries: dict, rhs: float) -> int:
        self.a_rows.append(self._row(entries))
        self.b.append(rhs)
        return len(self.b) - 1

    def lp(self, entries: dict, rhs: float) -> int:
        """entries'x <= rhs."""
        self.lp_rows.append(self._row(entries))
        self.lp_h.append(rhs)
        return len(self.lp_h) - 1

    def soc(self, rows: list[dict], h: list[float]) -> int:
        """(h - Gx) in SOC, G given row-wise."""
        start = len(self.soc_h)
        self.soc_rows.extend(self._row(r) for r in rows)
        self.soc_h.extend(h)
        self.soc_dims.append(len(h))
        return start

    @staticmethod
    def _matrix(rows: list[dict], n: int) -> sp.csc_matrix:
        r, c, v = [], [], []
        for i, row in enumerate(rows):
            for j, val in row.items():
                r.append(i)
                c.append(j)
                v.append(val)
        return sp.csc_matrix((v, (r, c)), shape=(len(rows), n))

    def finish(self):
        a = self._matrix(self.a_rows, self.n)
        g = self._matrix(self.lp_rows + self.soc_rows, self.n)
        h = np.array(self.lp_h + self.soc_h, dtype=float)
        return a, np.array(self.b, dtype=float), g, h


def _matrix_entries(block: np.ndarray, cols: slice, scale: float = 1.0) -> list[dict]:
    rows = []
    for i in range(block.shape[0]):
        rows.append({cols.start + j: scale * block[i, j] for j in range(block.shape[1]) if block[i, j] != 0})
    return rows


def build_problem(
    model: NetworkModel,
    objective: ObjectiveSpec = ObjectiveSpec(),
    lam: float = 0.0,
    voltage: VoltageSpec = VoltageSpec(),
    iterate: Optional[np.ndarray] = None,
    overrides: Optional[Mapping] = None,
    phase_one: bool = False,
    incidence: Optional[IncidenceMap] = None,
) -> DsrProblem:
    """Assemble the program for any voltage mode.

    In magnitude mode the upper bounds are second-order cones; the lower bounds
    are linearized at ``iterate`` (omitted when ``iterate`` is None). With
    ``phase_one`` the objective is replaced by the total slack on the
    linearized lower bounds.
    """
    inc = incidence or build_incidence(model)
    lambdas = line_lambdas(model, lam, overrides)
    for k, l in enumerate(model.lines):
        if np.linalg.eigvalsh(model.z_pu(l).real).min() <= 0:
            raise FormulationError(f"line {l.key}: Re Z is not positive definite")

    # -- variable layout
    col = 0
    xi_cols, names = {}, []
    for k, l in enumerate(model.lines):
        p = len(l.phases)
        xi_cols[k] = slice(col, col + 2 * p)
        names += [f"xi{l.key}.{part}.{ph}" for part in ("re", "im") for ph in l.phases]
        col += 2 * p
    sigma_cols = {}
    for n in model.nodes:
        if n.is_substation or n.dg:
            p = len(n.phases)
            sigma_cols[n.id] = slice(col, col + 2 * p)
            names += [f"sigma[{n.id}].{part}.{ph}" for part in ("p", "q") for ph in n.phases]
            col += 2 * p
    t_cols = {}
    for k, l in enumerate(model.lines):
        if l.switchable and lambdas[l.key] > 0:
            t_cols[k] = col
            names.append(f"t{l.key}")
            col += 1

    mag_nodes = []
    if voltage.mode == "magnitude" and iterate is not None:
        for n in voltage.nodes:
            if n in voltage.lower:
                mag_nodes += [(n, ph) for ph in model.node(n).phases]
    slack_cols = {}
    if phase_one:
        if not mag_nodes:
            raise FormulationError("phase-one program needs linearized lower magnitude bounds")
        for key in mag_nodes:
            slack_cols[key] = col
            names.append(f"slack[{key[0]}].{key[1]}")
            col += 1
    layout = Layout(size=col, xi=xi_cols, sigma=sigma_cols, t=t_cols, slack=slack_cols)
    b = _Builder(col)

    # -- KCL: sum_in A xi - sum_out A xi + G sigma = -h
    kcl = {}
    dg_fixed = []
    lp_registry = []
    for n in model.nodes:
        rows = [dict() for _ in range(2 * len(n.phases))]
        for k in inc.incoming[n.id]:
            for i, r in enumerate(_matrix_entries(inc.stacked(n.id, k), xi_cols[k])):
                rows[i].update(r)
        for k in inc.outgoing[n.id]:
            for i, r in enumerate(_matrix_entries(inc.stacked(n.id, k), xi_cols[k], -1.0)):
                rows[i].update(r)
        g, h = linear_injection_pu(n, model)
        if n.id in sigma_cols:
            for i, r in enumerate(_matrix_entries(g, sigma_cols[n.id])):
                rows[i].update(r)
        first = None
        for i, r in enumerate(rows):
            idx = b.eq(r, -h[i])
            first = idx if first is None else first
        kcl[n.id] = slice(first, first + len(rows))

        if n.dg and not n.is_substation:
            lo, hi = n.dg_bounds()
            lo, hi = lo / model.s_base, hi / model.s_base
            s = sigma_cols[n.id]
            for i in range(len(lo)):
                c = s.start + i
                if lo[i] == hi[i]:
                    dg_fixed.append(b.eq({c: 1.0}, lo[i]))
                else:
                    lp_registry.append(("dg_upper", (n.id, i), b.lp({c: 1.0}, hi[i])))
                    lp_registry.append(("dg_lower", (n.id, i), b.lp({c: -1.0}, -lo[i])))

    # -- voltage: paths and affine node voltages
    paths = {}
    vmaps = {}
    if voltage.mode != "none":
        for n in voltage.nodes:
            path = switch_free_path(model, inc, n)
            if path is None:
                raise FormulationError(f"node {n}: no switch-free path to the substation or a loaded node")
            paths[n] = path
            vmaps[n] = _voltage_map(model, layout, path, n)

    if voltage.mode == "box":
        for n in voltage.nodes:
            c, hmat = vmaps[n]
            hd = hmat.toarray()
            up = np.broadcast_to(np.asarray(voltage.upper.get(n, np.inf), dtype=float), c.shape)
            lo = np.broadcast_to(np.asarray(voltage.lower.get(n, -np.inf), dtype=float), c.shape)
            for i in range(len(c)):
                entries = {j: hd[i, j] for j in np.nonzero(hd[i])[0]}
                if np.isfinite(up[i]):
                    if entries:
                        lp_registry.append(("vbox_upper", (n, i), b.lp(entries, up[i] - c[i])))
                    elif c[i] > up[i]:
                        raise FormulationError(f"node {n}: fixed reference voltage violates its box")
                if np.isfinite(lo[i]):
                    if entries:
                        neg = {j: -v for j, v in entries.items()}
                        lp_registry.append(("vbox_lower", (n, i), b.lp(neg, c[i] - lo[i])))
                    elif c[i] < lo[i]:
                        raise FormulationError(f"node {n}: fixed reference voltage violates its box")

    magnitude_rows = []
    if voltage.mode == "magnitude":
        for n in voltage.nodes:
            c, hmat = vmaps[n]
            phases = model.node(n).phases
            p = len(phases)
            for i, ph in enumerate(phases):
                hrow = hmat[[i, p + i], :]
                magnitude_rows.append(
                    MagnitudeRow(
                        node=n,
                        phase=ph,
                        c=np.array([c[i], c[p + i]]),
                        H=sp.csr_matrix(hrow),
                        lower=float(voltage.lower.get(n, 0.0)),
                        upper=float(voltage.upper.get(n, math.inf)),
                    )
                )
        if iterate is not None:
            # phase one appends slack columns after the regular layout
            iterate = np.concatenate([np.asarray(iterate, dtype=float), np.zeros(col - len(iterate))])
            for row in magnitude_rows:
                if row.node not in voltage.lower:
                    continue
                a, bb = row.surrogate_coefficients(iterate)
                entries = {j: -a[j] for j in np.nonzero(a)[0]}
                rhs = bb - row.lower**2 - float(a @ iterate)
                if phase_one:
                    entries[slack_cols[(row.node, row.phase)]] = -1.0
                lp_registry.append(("vmag_lower", (row.node, row.phase), b.lp(entries, rhs)))
        if phase_one:
            for key, c_ in slack_cols.items():
                lp_registry.append(("slack", key, b.lp({c_: -1.0}, 0.0)))

    n_nonneg = len(b.lp_h)

    # -- cones
    cones = []
    for k, l in enumerate(model.lines):
        if k in t_cols:
            s = xi_cols[k]
            rows = [{t_cols[k]: -1.0}] + [{s.start + j: -1.0} for j in range(s.stop - s.start)]
            start = b.soc(rows, [0.0] * len(rows))
            cones.append(Cone("group", (k,), n_nonneg + start, len(rows)))
    for k, l in enumerate(model.lines):
        if math.isfinite(l.i_max):
            cap = math.sqrt(model.i_max_pu(l))
            s, p = xi_cols[k], len(l.phases)
            for j in range(p):
                start = b.soc([{}, {s.start + j: -1.0}, {s.start + p + j: -1.0}], [cap, 0.0, 0.0])
                cones.append(Cone("cap", (k, j), n_nonneg + start, 3))
    for row in magnitude_rows:
        if math.isfinite(row.upper):
            hd = row.H.toarray()
            rows = [{}] + [{j: -hd[i, j] for j in np.nonzero(hd[i])[0]} for i in range(2)]
            start = b.soc(rows, [row.upper, row.c[0], row.c[1]])
            cones.append(Cone("vmag_upper", (row.node, row.phase), n_nonneg + start, 3))

    a_mat, b_vec, g_mat, h_vec = b.finish()

    # -- objective
    P = np.zeros((col, col))
    q = np.zeros(col)
    if phase_one:
        for c_ in slack_cols.values():
            q[c_] = 1.0
    else:
        _add_objective(model, objective, layout, P, q)
        for k, c_ in t_cols.items():
            q[c_] += lambdas[model.lines[k].key] / model.v_base
    P = sp.csc_matrix(P)

    form = ConicForm(
        P=P,
        q=q,
        A=a_mat,
        b=b_vec,
        G=g_mat,
        h=h_vec,
        n_nonneg=n_nonneg,
        soc_dims=tuple(b.soc_dims),
        names=tuple(names),
    )
    registry = Registry(kcl=kcl, dg_fixed=tuple(dg_fixed), lp=tuple(lp_registry), cones=tuple(cones))
    return DsrProblem(
        model=model,
        incidence=inc,
        objective=objective,
        lam=lam,
        lambdas=lambdas,
        voltage=voltage,
        layout=layout,
        form=form,
        registry=registry,
        paths=paths,
        magnitude_rows=tuple(magnitude_rows),
        iterate=None if iterate is None else np.array(iterate, dtype=float),
        phase_one=phase_one,
        overrides=overrides,
    )


def _add_objective(model: NetworkModel, objective: ObjectiveSpec, layout: Layout, P, q) -> None:
    kind = objective.kind
    w_op = {"loss": 0.0, "operational": 1.0, "balancing": 0.0, "mixed": objective.mix_weight}[kind]
    w_bal = {"loss": 0.0, "operational": 0.0, "balancing": 1.0, "mixed": 1.0 - objective.mix_weight}[kind]
    if kind == "loss":
        # 1/2 sum xi' Zbar xi
        for k, l in enumerate(model.lines):
            s = layout.xi[k]
            P[s, s] += np.kron(np.eye(2), model.z_pu(l).real)
    if w_op > 0:
        # c0 * sum xi' Zbar xi + sum c * Re(sigma_G), scaled by 1/s_base
        for k, l in enumerate(model.lines):
            s = layout.xi[k]
            P[s, s] += 2.0 * w_op * objective.c0 * np.kron(np.eye(2), model.z_pu(l).real)
        for n in model.nodes:
            if n.dg and not n.is_substation:
                q[layout.sigma[n.id]] += w_op * n.dg_cost()
    if w_bal > 0:
        members = objective.balance_set
        if members is None:
            members = [l.key for l in model.lines if math.isfinite(l.i_max)]
        members = sorted(tuple(m) for m in members)
        if not members:
            raise FormulationError("balancing objective needs at least one line with a finite i_max")
        for key in members:
            if not model.has_line(key):
                continue  # line removed from this sub-network
            k = model.line_index(key)
            l = model.lines[k]
            if not math.isfinite(l.i_max) or l.i_max <= 0:
                raise FormulationError(f"balancing objective: line {key} has no positive i_max")
            s = layout.xi[k]
            scale = 2.0 * w_bal / model.i_max_pu(l)
            P[s, s] += scale * np.eye(2 * len(l.phases))


def build_p2(model, objective=ObjectiveSpec(), lam=0.0, overrides=None, incidence=None) -> DsrProblem:
    """Group-sparse program without voltage constraints."""
    return build_problem(model, objective, lam, VoltageSpec(), overrides=overrides, incidence=incidence)


def add_voltage_box(problem: DsrProblem, voltage: VoltageSpec) -> DsrProblem:
    """Same program with two-sided linear bounds on the reconstructed node voltages."""
    if voltage.mode != "box":
        raise FormulationError("add_voltage_box expects a box VoltageSpec")
    return build_problem(
        problem.model, problem.objective, problem.lam, voltage, overrides=problem.overrides, incidence=problem.incidence
    )


def build_sca_subproblem(problem: DsrProblem, voltage: VoltageSpec, iterate: Optional[np.ndarray]) -> DsrProblem:
    """Convex restriction at ``iterate``: conic upper bounds, linearized lower bounds."""
    if voltage.mode != "magnitude":
        raise FormulationError("build_sca_subproblem expects a magnitude VoltageSpec")
    return build_problem(
        problem.model,
        problem.objective,
        problem.lam,
        voltage,
        iterate=iterate,
        overrides=problem.overrides,
        incidence=problem.incidence,
    )


def regularized_objective(problem: DsrProblem, x: np.ndarray) -> float:
    """Objective value of x in the problem's units (per unit power for the loss kind)."""
    return problem.form.objective(x)
