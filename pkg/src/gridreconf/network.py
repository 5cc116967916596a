"""Three-phase feeder model: nodes, lines, switches, loads and DG units.

Values are stored in the units of the network file (kW, kvar, kV, kVA,
ohms, amperes) so that parse -> serialize -> parse is exact. Per-unit
quantities are derived on demand from ``v_base``/``s_base``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional

import networkx as nx
import numpy as np

PHASE_ORDER = ("a", "b", "c")
NOMINAL_ANGLE = {"a": 0.0, "b": -2.0 * math.pi / 3.0, "c": 2.0 * math.pi / 3.0}
FEET_PER_MILE = 5280.0

LineKey = tuple[int, int]


class ParseError(ValueError):
    """Network file does not follow the schema."""


class ModelError(ValueError):
    """Network data is well formed but physically or topologically invalid."""


def nominal_phasor(phase: str) -> complex:
    """Unit phasor e^{j phi_N} for a phase label."""
    return complex(math.cos(NOMINAL_ANGLE[phase]), math.sin(NOMINAL_ANGLE[phase]))


def sort_phases(phases: Iterable[str]) -> tuple[str, ...]:
    return tuple(p for p in PHASE_ORDER if p in set(phases))


@dataclass(frozen=True)
class TransformerSpec:
    """Distribution transformer feeding a load (secondary power is the load itself)."""

    core_loss_kw: float
    r_coeff_ohm: float


@dataclass(frozen=True)
class PhaseLoad:
    p_kw: float
    q_kvar: float
    kappa: int = 0
    transformer: Optional[TransformerSpec] = None

    @property
    def s(self) -> complex:
        """Demanded complex power in VA."""
        return complex(self.p_kw, self.q_kvar) * 1e3


@dataclass(frozen=True)
class PhaseDg:
    p_min_kw: float
    p_max_kw: float
    q_min_kvar: float
    q_max_kvar: float
    cost: float = 0.0  # per kW of active power


@dataclass(frozen=True)
class Node:
    id: int
    phases: tuple[str, ...]
    is_substation: bool = False
    load: Mapping[str, PhaseLoad] = field(default_factory=dict)
    dg: Mapping[str, PhaseDg] = field(default_factory=dict)

    @property
    def has_load(self) -> bool:
        return any(abs(ld.s) > 0 for ld in self.load.values())

    def load_vector(self) -> np.ndarray:
        """Demanded power stacked as [Re; Im] over the node phases, in VA."""
        s = np.array([self.load[p].s if p in self.load else 0j for p in self.phases])
        return np.concatenate([s.real, s.imag])

    def dg_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (sigma_min, sigma_max) in VA; zero on phases without DG."""
        lo = np.zeros(2 * len(self.phases))
        hi = np.zeros(2 * len(self.phases))
        k = len(self.phases)
        for i, p in enumerate(self.phases):
            if p in self.dg:
                d = self.dg[p]
                lo[i], hi[i] = d.p_min_kw * 1e3, d.p_max_kw * 1e3
                lo[k + i], hi[k + i] = d.q_min_kvar * 1e3, d.q_max_kvar * 1e3
        return lo, hi

    def dg_cost(self) -> np.ndarray:
        """Per-watt cost on the stacked sigma coordinates (reactive entries are zero)."""
        c = np.zeros(2 * len(self.phases))
        for i, p in enumerate(self.phases):
            if p in self.dg:
                c[i] = self.dg[p].cost / 1e3
        return c


@dataclass(frozen=True)
class Line:
    from_node: int
    to_node: int
    phases: tuple[str, ...]
    impedance: np.ndarray  # complex ohms, |phases| x |phases|
    switchable: bool = False
    i_max_amp: Optional[float] = None
    lambda_weight: Optional[float] = None
    normally_open: bool = False

    @property
    def key(self) -> LineKey:
        return (self.from_node, self.to_node)

    @property
    def i_max(self) -> float:
        """Cap on |I|^2 per phase in A^2 (inf when absent)."""
        return math.inf if self.i_max_amp is None else self.i_max_amp**2

    def __eq__(self, other):
        if not isinstance(other, Line):
            return NotImplemented
        return (
            self.key == other.key
            and self.phases == other.phases
            and np.array_equal(self.impedance, other.impedance)
            and self.switchable == other.switchable
            and self.i_max_amp == other.i_max_amp
            and self.lambda_weight == other.lambda_weight
            and self.normally_open == other.normally_open
        )

    def __hash__(self):
        return hash((self.key, self.phases))


@dataclass(frozen=True)
class NetworkModel:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    v_nominal_kv: float
    s_base_kva: float
    name: str = ""
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "lines", tuple(sorted(self.lines, key=lambda l: l.key)))
        object.__setattr__(self, "_node_pos", {n.id: i for i, n in enumerate(self.nodes)})
        object.__setattr__(self, "_line_pos", {l.key: i for i, l in enumerate(self.lines)})

    # bases
    @property
    def v_nominal(self) -> float:
        return self.v_nominal_kv * 1e3

    @property
    def v_base(self) -> float:
        """Per-phase voltage base V_N / sqrt(3)."""
        return self.v_nominal / math.sqrt(3.0)

    @property
    def s_base(self) -> float:
        return self.s_base_kva * 1e3

    @property
    def z_base(self) -> float:
        return self.v_base**2 / self.s_base

    @property
    def i_base(self) -> float:
        return self.s_base / self.v_base

    # lookup
    def node(self, node_id: int) -> Node:
        return self.nodes[self._node_pos[node_id]]

    def line(self, key: LineKey) -> Line:
        return self.lines[self._line_pos[tuple(key)]]

    def line_index(self, key: LineKey) -> int:
        return self._line_pos[tuple(key)]

    def has_line(self, key: LineKey) -> bool:
        return tuple(key) in self._line_pos

    @property
    def substation(self) -> Node:
        return next(n for n in self.nodes if n.is_substation)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes)

    @property
    def switch_keys(self) -> tuple[LineKey, ...]:
        return tuple(l.key for l in self.lines if l.switchable)

    def z_pu(self, line: Line) -> np.ndarray:
        return line.impedance / self.z_base

    def i_max_pu(self, line: Line) -> float:
        return line.i_max / self.i_base**2

    # derived models
    def with_lines(self, keys: Iterable[LineKey]) -> "NetworkModel":
        """Sub-network keeping only the given lines (all nodes retained, not revalidated)."""
        keep = {tuple(k) for k in keys}
        return replace(self, lines=tuple(l for l in self.lines if l.key in keep))

    def with_v_nominal(self, v_nominal_kv: float) -> "NetworkModel":
        return replace(self, v_nominal_kv=v_nominal_kv)

    def with_switchable(self, keys: Iterable[LineKey], switchable: bool = True) -> "NetworkModel":
        sel = {tuple(k) for k in keys}
        lines = tuple(replace(l, switchable=switchable) if l.key in sel else l for l in self.lines)
        return replace(self, lines=lines)

    def base_configuration(self) -> frozenset[LineKey]:
        """Lines closed in the normal operating state (normally-open ties excluded)."""
        return frozenset(l.key for l in self.lines if not l.normally_open)

    def graph(self, keys: Optional[Iterable[LineKey]] = None) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.node_ids)
        lines = self.lines if keys is None else [self.line(k) for k in keys]
        for l in lines:
            g.add_edge(l.from_node, l.to_node, key=l.key)
        return g

    def unreachable(self, keys: Optional[Iterable[LineKey]] = None) -> list[int]:
        """Nodes not connected to the substation through the given lines."""
        g = self.graph(keys)
        seen = nx.node_connected_component(g, self.substation.id)
        return [n for n in self.node_ids if n not in seen]

    def validate(self) -> None:
        subs = [n for n in self.nodes if n.is_substation]
        if len(subs) != 1:
            raise ModelError(f"expected exactly one substation, found {len(subs)}")
        all_phases = set().union(*(n.phases for n in self.nodes))
        if not all_phases <= set(subs[0].phases):
            raise ModelError("substation must carry every phase present in the network")
        if len(self._node_pos) != len(self.nodes):
            raise ModelError("duplicate node ids")
        seen_pairs = set()
        for l in self.lines:
            if l.from_node == l.to_node:
                raise ModelError(f"line {l.key} is a self-loop")
            for end in l.key:
                if end not in self._node_pos:
                    raise ModelError(f"line {l.key} references unknown node {end}")
                if not set(l.phases) <= set(self.node(end).phases):
                    raise ModelError(f"line {l.key} phases {l.phases} not available at node {end}")
            pair = frozenset(l.key)
            if pair in seen_pairs:
                raise ModelError(f"parallel line between {sorted(pair)} is not supported")
            seen_pairs.add(pair)
            z = l.impedance
            if z.shape != (len(l.phases), len(l.phases)):
                raise ModelError(f"line {l.key} impedance shape {z.shape} does not match phases")
            if not np.allclose(z, z.T, rtol=1e-12, atol=1e-12):
                raise ModelError(f"line {l.key} impedance is not symmetric")
            if np.linalg.eigvalsh(z.real).min() <= 0:
                raise ModelError(f"line {l.key} has a real impedance part that is not positive definite")
            if l.i_max_amp is not None and l.i_max_amp < 0:
                raise ModelError(f"line {l.key} has negative i_max_amp")
            if l.lambda_weight is not None and l.lambda_weight < 0:
                raise ModelError(f"line {l.key} has negative lambda_weight")
        for n in self.nodes:
            if not set(n.load) <= set(n.phases) or not set(n.dg) <= set(n.phases):
                raise ModelError(f"node {n.id} load/dg phases exceed node phases")
            for ld in n.load.values():
                if ld.kappa not in (0, 1, 2):
                    raise ModelError(f"node {n.id} kappa must be 0, 1 or 2")
                if ld.transformer is not None and (
                    ld.transformer.core_loss_kw <= 0 or ld.transformer.r_coeff_ohm <= 0
                ):
                    raise ModelError(f"node {n.id} transformer losses must be positive")
            for d in n.dg.values():
                if d.p_min_kw > d.p_max_kw or d.q_min_kvar > d.q_max_kvar:
                    raise ModelError(f"node {n.id} DG bounds are inverted")
        lost = self.unreachable()
        if lost:
            raise ModelError(f"nodes unreachable from the substation: {lost}")


# ---------------------------------------------------------------------------
# file format


def _phases(value, where: str) -> tuple[str, ...]:
    if isinstance(value, str):
        value = list(value)
    if not isinstance(value, list) or not value:
        raise ParseError(f"{where}: phases must be a nonempty string or list")
    bad = [p for p in value if p not in PHASE_ORDER]
    if bad or len(set(value)) != len(value):
        raise ParseError(f"{where}: invalid phase labels {value}")
    return sort_phases(value)


def _num(obj: Mapping, key: str, where: str, default=None, required=True) -> Optional[float]:
    if key not in obj:
        if required and default is None:
            raise ParseError(f"{where}.{key}: missing")
        return default
    v = obj[key]
    if v is None and not required:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParseError(f"{where}.{key}: expected a finite number, got {v!r}")
    return float(v)


def _matrix(value, size: int, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.size != size * size:
        raise ParseError(f"{where}: expected {size}x{size} entries, got {arr.size}")
    return arr.reshape(size, size)


def _parse_node(raw: Mapping, i: int) -> Node:
    where = f"nodes[{i}]"
    if not isinstance(raw, Mapping):
        raise ParseError(f"{where}: expected an object")
    if "id" not in raw or isinstance(raw["id"], bool) or not isinstance(raw["id"], int):
        raise ParseError(f"{where}.id: expected an integer")
    if raw["id"] < 0:
        raise ParseError(f"{where}.id: must be nonnegative")
    phases = _phases(raw.get("phases"), f"{where}.phases")
    load = {}
    raw_load = raw.get("load") or {}
    if raw_load.get("connection", "wye") != "wye":
        raise ParseError(f"{where}.load.connection: only wye-connected loads are supported")
    for p, spec in raw_load.items():
        if p == "connection":
            continue
        w = f"{where}.load.{p}"
        if p not in PHASE_ORDER:
            raise ParseError(f"{w}: unknown phase")
        tr = None
        if spec.get("transformer") is not None:
            t = spec["transformer"]
            tr = TransformerSpec(
                core_loss_kw=_num(t, "core_loss_kw", w + ".transformer"),
                r_coeff_ohm=_num(t, "r_coeff_ohm", w + ".transformer"),
            )
        kappa = spec.get("kappa", 0)
        if kappa not in (0, 1, 2) or isinstance(kappa, bool):
            raise ParseError(f"{w}.kappa: must be 0, 1 or 2")
        load[p] = PhaseLoad(
            p_kw=_num(spec, "p_kw", w), q_kvar=_num(spec, "q_kvar", w, default=0.0), kappa=kappa, transformer=tr
        )
    dg = {}
    for p, spec in (raw.get("dg") or {}).items():
        w = f"{where}.dg.{p}"
        if p not in PHASE_ORDER:
            raise ParseError(f"{w}: unknown phase")
        dg[p] = PhaseDg(
            p_min_kw=_num(spec, "p_min_kw", w),
            p_max_kw=_num(spec, "p_max_kw", w),
            q_min_kvar=_num(spec, "q_min_kvar", w, default=0.0),
            q_max_kvar=_num(spec, "q_max_kvar", w, default=0.0),
            cost=_num(spec, "cost", w, default=0.0),
        )
    return Node(
        id=raw["id"],
        phases=phases,
        is_substation=bool(raw.get("substation", False)),
        load={p: load[p] for p in sort_phases(load)},
        dg={p: dg[p] for p in sort_phases(dg)},
    )


def _parse_line(raw: Mapping, i: int, configs: Mapping) -> Line:
    where = f"lines[{i}]"
    if not isinstance(raw, Mapping):
        raise ParseError(f"{where}: expected an object")
    for k in ("from", "to"):
        if not isinstance(raw.get(k), int) or isinstance(raw.get(k), bool):
            raise ParseError(f"{where}.{k}: expected an integer node id")
    phases = _phases(raw.get("phases"), f"{where}.phases")
    k = len(phases)
    if "z_real" in raw:
        zr = _matrix(raw["z_real"], k, f"{where}.z_real")
        zi = _matrix(raw.get("z_imag", np.zeros((k, k))), k, f"{where}.z_imag")
        z = zr + 1j * zi
    elif "config_id" in raw:
        cid = str(raw["config_id"])
        if cid not in configs:
            raise ParseError(f"{where}.config_id: unknown configuration {cid!r}")
        length = _num(raw, "length_ft", where)
        cfg = configs[cid]
        cw = f"configs[{cid}]"
        cph = _phases(cfg.get("phases", "abc"), cw + ".phases")
        if not set(phases) <= set(cph):
            raise ParseError(f"{where}.phases: not a subset of configuration {cid} phases")
        zc = _matrix(cfg["z_real"], len(cph), cw + ".z_real") + 1j * _matrix(
            cfg["z_imag"], len(cph), cw + ".z_imag"
        )
        idx = [cph.index(p) for p in phases]
        z = zc[np.ix_(idx, idx)] * (length / FEET_PER_MILE)
    else:
        raise ParseError(f"{where}: needs z_real/z_imag or config_id + length_ft")
    z = z.copy()
    z.setflags(write=False)
    i_max = _num(raw, "i_max_amp", where, required=False)
    lam = _num(raw, "lambda_weight", where, required=False)
    return Line(
        from_node=raw["from"],
        to_node=raw["to"],
        phases=phases,
        impedance=z,
        switchable=bool(raw.get("switchable", False)),
        i_max_amp=i_max,
        lambda_weight=lam,
        normally_open=bool(raw.get("normally_open", False)),
    )


def network_from_dict(data: Mapping) -> NetworkModel:
    """Build and validate a model from the decoded network document."""
    if not isinstance(data, Mapping):
        raise ParseError("top level: expected an object")
    for key in ("v_nominal_kv", "s_base_kva", "nodes", "lines"):
        if key not in data:
            raise ParseError(f"{key}: missing")
    v = _num(data, "v_nominal_kv", "top level")
    s = _num(data, "s_base_kva", "top level")
    if v <= 0 or s <= 0:
        raise ParseError("v_nominal_kv and s_base_kva must be positive")
    configs = {str(k): c for k, c in (data.get("configs") or {}).items()}
    nodes = tuple(_parse_node(raw, i) for i, raw in enumerate(data["nodes"]))
    lines = tuple(_parse_line(raw, i, configs) for i, raw in enumerate(data["lines"]))
    model = NetworkModel(
        nodes=nodes,
        lines=lines,
        v_nominal_kv=v,
        s_base_kva=s,
        name=str(data.get("name", "")),
        description=str(data.get("description", "")),
    )
    model.validate()
    return model


def parse_network(path) -> NetworkModel:
    """Read a network JSON file.

    Raises ParseError for malformed documents (the message names the field
    path and, for JSON syntax errors, the file line) and ModelError for
    invalid physics or topology.
    """
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return network_from_dict(data)


def network_to_dict(model: NetworkModel) -> dict:
    nodes = []
    for n in model.nodes:
        item = {"id": n.id, "phases": "".join(n.phases), "substation": n.is_substation}
        if n.load:
            item["load"] = {}
            for p, ld in n.load.items():
                entry = {"p_kw": ld.p_kw, "q_kvar": ld.q_kvar, "kappa": ld.kappa}
                if ld.transformer is not None:
                    entry["transformer"] = {
                        "core_loss_kw": ld.transformer.core_loss_kw,
                        "r_coeff_ohm": ld.transformer.r_coeff_ohm,
                    }
                item["load"][p] = entry
        if n.dg:
            item["dg"] = {
                p: {
                    "p_min_kw": d.p_min_kw,
                    "p_max_kw": d.p_max_kw,
                    "q_min_kvar": d.q_min_kvar,
                    "q_max_kvar": d.q_max_kvar,
                    "cost": d.cost,
                }
                for p, d in n.dg.items()
            }
        nodes.append(item)
    lines = []
    for l in model.lines:
        item = {
            "from": l.from_node,
            "to": l.to_node,
            "phases": "".join(l.phases),
            "z_real": l.impedance.real.tolist(),
            "z_imag": l.impedance.imag.tolist(),
            "switchable": l.switchable,
        }
        if l.i_max_amp is not None:
            item["i_max_amp"] = l.i_max_amp
        if l.lambda_weight is not None:
            item["lambda_weight"] = l.lambda_weight
        if l.normally_open:
            item["normally_open"] = True
        lines.append(item)
    out = {"v_nominal_kv": model.v_nominal_kv, "s_base_kva": model.s_base_kva}
    if model.name:
        out["name"] = model.name
    if model.description:
        out["description"] = model.description
    out["nodes"] = nodes
    out["lines"] = lines
    return out


def serialize_network(model: NetworkModel, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(model), indent=1))


# ---------------------------------------------------------------------------
# incidence, cycles, paths


@dataclass(frozen=True)
class IncidenceMap:
    """Per-node in/out line lists and phase-selection matrices A_mn^(n)."""

    incoming: Mapping[int, tuple[int, ...]]  # node id -> indices of lines (j, n)
    outgoing: Mapping[int, tuple[int, ...]]  # node id -> indices of lines (n, k)
    selection: Mapping[tuple[int, int], np.ndarray]  # (node id, line index) -> |P_n| x |P_mn|

    def stacked(self, node_id: int, line_index: int) -> np.ndarray:
        """I_2 (x) A_mn^(n), acting on stacked [Re; Im] vectors."""
        return np.kron(np.eye(2), self.selection[(node_id, line_index)])


def selection_matrix(node_phases: tuple[str, ...], line_phases: tuple[str, ...]) -> np.ndarray:
    a = np.zeros((len(node_phases), len(line_phases)))
    for j, p in enumerate(line_phases):
        a[node_phases.index(p), j] = 1.0
    return a


def build_incidence(model: NetworkModel) -> IncidenceMap:
    incoming = {n: [] for n in model.node_ids}
    outgoing = {n: [] for n in model.node_ids}
    selection = {}
    for k, l in enumerate(model.lines):
        outgoing[l.from_node].append(k)
        incoming[l.to_node].append(k)
        for end in l.key:
            a = selection_matrix(model.node(end).phases, l.phases)
            a.setflags(write=False)
            selection[(end, k)] = a
    return IncidenceMap(
        incoming={n: tuple(v) for n, v in incoming.items()},
        outgoing={n: tuple(v) for n, v in outgoing.items()},
        selection=selection,
    )


def enumerate_cycles(model: NetworkModel, keys: Optional[Iterable[LineKey]] = None) -> list[frozenset[LineKey]]:
    """Fundamental cycle basis as sets of line keys, rooted at the substation."""
    g = model.graph(keys)
    cycles = []
    for cyc in nx.cycle_basis(g, root=model.substation.id):
        edges = zip(cyc, cyc[1:] + cyc[:1])
        cycles.append(frozenset(g.edges[u, v]["key"] for u, v in edges))
    return cycles


@dataclass(frozen=True)
class SwitchFreePath:
    reference: int
    target: int
    edges: tuple[tuple[int, int], ...]  # (line index, alpha) ordered from reference to target


def switch_free_path(model: NetworkModel, incidence: IncidenceMap, target: int) -> Optional[SwitchFreePath]:
    """Path to ``target`` over non-switchable lines from the substation, or else the nearest loaded node.

    alpha is +1 when an edge (m, n) is traversed from n to m and -1 when
    traversed along its direction, so that nu_target = nu_ref + sum alpha Psi xi.
    """
    parent = {target: None}
    order = [target]
    queue = deque([target])
    while queue:
        u = queue.popleft()
        for k in sorted(incidence.incoming[u] + incidence.outgoing[u]):
            l = model.lines[k]
            if l.switchable:
                continue
            v = l.from_node if l.to_node == u else l.to_node
            if v not in parent:
                parent[v] = (u, k)
                order.append(v)
                queue.append(v)
    sub = model.substation.id
    if sub in parent:
        ref = sub
    else:
        loaded = [n for n in order if model.node(n).has_load]
        if not loaded:
            return None
        ref = loaded[0]  # BFS order is by distance, ties by line ordering
    edges = []
    v = ref
    while v != target:
        u, k = parent[v]
        l = model.lines[k]
        # walking from v (closer to reference) toward u (closer to target)
        alpha = -1 if (l.from_node, l.to_node) == (v, u) else 1
        edges.append((k, alpha))
        v = u
    return SwitchFreePath(reference=ref, target=target, edges=tuple(edges))
