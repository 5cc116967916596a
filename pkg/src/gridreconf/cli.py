"""Command-line front end.

    gridreconf solve    --input FEEDER [--lambda L | --target-closed K] [--voltage ...] --out DIR
    gridreconf sweep    --input FEEDER --lambda-grid lo:hi:n [--include-zero] --out DIR
    gridreconf oracle   --input FEEDER [--radial-only] --out DIR
    gridreconf baseline --input FEEDER --out DIR
    gridreconf sca      --input FEEDER --vmin 0.95 --vmax 1.05 --out DIR
    gridreconf validate --seed S --out DIR
    gridreconf report   --input FEEDER

FEEDER is a JSON network file or the name of a bundled feeder. Exit codes:
0 optimal, 2 solver did not reach an optimum, 1 usage or model error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import datasets
from .formulation import OBJECTIVES, VOLTAGE_MODES, FormulationError, ObjectiveSpec, VoltageSpec, build_problem
from .loads import EvaluationError, load_deviation
from .network import ModelError, NetworkModel, ParseError, parse_network
from .pipeline import (
    OracleGuardError,
    RefitError,
    ScaError,
    auto_lambda,
    exhaustive_oracle,
    extract_topology,
    heuristic_baseline,
    lambda_sweep,
    refit,
    sca_solve,
)
from .solver import SolverConfig, VerificationError, solve, verify_prop1, verify_prop2

COMMANDS = ("solve", "sweep", "oracle", "baseline", "sca", "validate", "report")
OK, USAGE, NON_OPTIMAL = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    objective: str = "loss"
    lam: float = 0.0
    lambda_grid: Optional[str] = None
    include_zero: bool = False
    weights: Optional[str] = None
    voltage: str = "none"
    vmin: float = 0.95
    vmax: float = 1.05
    target_closed: Optional[int] = None
    radial_only: bool = False
    out: Optional[str] = None
    seed: int = 0
    tol: float = 1e-8
    cases: Optional[int] = None


def fmt(v) -> str:
    """Fixed 12-significant-digit rendering used in every CSV."""
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def _key(k) -> str:
    return f"{k[0]}-{k[1]}"


def _keys(ks) -> list[str]:
    return [_key(k) for k in sorted(ks)]


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in r])


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")


def parse_grid(spec: str) -> list[float]:
    """'lo:hi:n' -> n logarithmically spaced values from lo to hi."""
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"--lambda-grid expects lo:hi:n, got {spec!r}") from None
    if not (0 < lo < hi) or n < 2:
        raise UsageError("--lambda-grid needs 0 < lo < hi and n >= 2")
    return [float(v) for v in np.geomspace(lo, hi, n)]


def load_weights(path: str) -> dict:
    """Per-line lambda overrides from JSON: {"m-n": value} or [[m, n, value], ...]."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read weights file {path}: {exc}") from None
    out = {}
    items = raw.items() if isinstance(raw, dict) else ((f"{r[0]}-{r[1]}", r[2]) for r in raw)
    for k, v in items:
        try:
            m, n = (int(p) for p in str(k).split("-"))
            out[(m, n)] = float(v)
        except ValueError:
            raise UsageError(f"weights file: bad entry {k!r}") from None
    return out


def load_input(name: Optional[str]) -> NetworkModel:
    if not name:
        raise UsageError("--input is required for this command")
    p = Path(name)
    if not p.exists() and name in datasets.BUNDLED:
        p = datasets.path(name)
    if not p.exists():
        raise UsageError(f"input {name!r} is neither a file nor a bundled feeder ({', '.join(sorted(datasets.BUNDLED))})")
    return parse_network(p)


def voltage_spec(cfg: RunConfig, model: NetworkModel) -> VoltageSpec:
    if cfg.voltage == "none":
        return VoltageSpec()
    if not 0 < cfg.vmin < cfg.vmax:
        raise UsageError("need 0 < --vmin < --vmax")
    if cfg.voltage == "box":
        # square inscribed in the annulus vmin <= |V| <= vmax around the nominal phasor
        delta = min(cfg.vmax - 1.0, 1.0 - cfg.vmin) / math.sqrt(2.0)
        if delta <= 0:
            raise UsageError("box mode needs vmin < 1 < vmax")
        return VoltageSpec.box_around_nominal(model, delta)
    return VoltageSpec.magnitude_bounds(model, cfg.vmin, cfg.vmax)


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise UsageError("--out is required for this command")
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    return out


def _deviation(model, solution):
    try:
        dp, dq = load_deviation(model, solution)
        return dp / 1e3, dq / 1e3
    except EvaluationError:
        return math.nan, math.nan


def _verification(solution) -> dict:
    try:
        return {"prop1": verify_prop1(solution), "prop2": verify_prop2(solution)}
    except VerificationError as exc:
        return {"error": str(exc)}


def _currents_rows(model, columns: list[dict]):
    """Rows (from, to, phase, |I| per column) over switched line-phases."""
    rows = []
    for l in model.lines:
        if not l.switchable:
            continue
        for p in l.phases:
            rows.append([str(l.from_node), str(l.to_node), p] + [c.get((l.key, p), math.nan) for c in columns])
    return rows


def _switch_currents(solution) -> dict:
    out = {}
    for key, xi in solution.currents_si().items():
        l = solution.model.line(key)
        if not l.switchable:
            continue
        k = len(l.phases)
        for j, p in enumerate(l.phases):
            out[(key, p)] = abs(complex(xi[j], xi[k + j]))
    return out


# ---------------------------------------------------------------------------
# commands


def _cmd_solve(cfg: RunConfig, config: SolverConfig) -> int:
    model = load_input(cfg.input)
    out = _out_dir(cfg)
    objective = ObjectiveSpec(cfg.objective)
    voltage = voltage_spec(cfg, model)
    overrides = load_weights(cfg.weights) if cfg.weights else None
    lam = cfg.lam
    summary = {"command": "solve", "input": cfg.input, "objective": cfg.objective, "voltage": cfg.voltage}
    start = time.perf_counter()
    if cfg.target_closed is not None:
        res = auto_lambda(model, cfg.target_closed, config=config, objective=objective, overrides=overrides)
        summary["auto_lambda"] = {"achieved": res.achieved, "bracket": res.bracket, "evaluations": res.evaluations}
        if not res.achieved:
            # nearest bracketing value: the end whose count is closest to the target
            lo, c_lo, hi, c_hi = res.bracket
            lam = lo if abs(c_lo - cfg.target_closed) <= abs(c_hi - cfg.target_closed) else hi
            print(f"warning: no lambda gives exactly {cfg.target_closed} closed switches; using {lam:g}", file=sys.stderr)
        else:
            lam = res.lam
    summary["lambda"] = lam
    if voltage.mode == "magnitude":
        sca = sca_solve(model, objective, lam, voltage, config, overrides)
        sol = sca.solution
        summary["sca"] = {"iterations": sca.iterations, "converged": sca.converged}
    else:
        sol = solve(build_problem(model, objective, lam, voltage, overrides=overrides), config)
    summary.update(status=sol.status, solve_time_s=sol.solve_time, kkt=sol.kkt.__dict__, iterations=sol.iterations)
    optimal = sol.status in ("optimal", "inaccurate")
    dev = (math.nan, math.nan)
    refit_kw = math.nan
    if optimal:
        topo = extract_topology(sol, model)
        summary["topology"] = {
            "open_switches": _keys(topo.open_switches),
            "closed_switches": _keys(topo.closed_switches),
            "radial": topo.radial,
            "connected": topo.connected,
        }
        summary["loss_kw"] = sol.loss_watts() / 1e3
        summary["verification"] = _verification(sol)
        if topo.connected:
            try:
                rsol, rloss = refit(model, topo, objective, config)
                refit_kw = rloss / 1e3
                summary["refit"] = {"status": rsol.status, "loss_kw": refit_kw}
            except (RefitError, FormulationError) as exc:
                summary["refit"] = {"error": str(exc)}
        dev = _deviation(model, sol)
        summary["deviation"] = {"delta_p_kw": dev[0], "delta_q_kvar": dev[1]}
        _write_csv(out / "currents.csv", ["from", "to", "phase", fmt(lam)], _currents_rows(model, [_switch_currents(sol)]))
    summary["wall_time_s"] = time.perf_counter() - start
    _write_csv(out / "loss_curve.csv", ["lambda", "refit_loss_kw"], [[lam, refit_kw]])
    _write_csv(out / "deviation.csv", ["lambda", "delta_p_kw", "delta_q_kvar"], [[lam, dev[0], dev[1]]])
    _write_json(out / "summary.json", summary)
    print(f"{sol.status}: loss {summary.get('loss_kw', math.nan):.6g} kW, refit {refit_kw:.6g} kW")
    if "topology" in summary:
        print("open switches: " + (", ".join(summary["topology"]["open_switches"]) or "none"))
    return OK if optimal else NON_OPTIMAL


def _cmd_sweep(cfg: RunConfig, config: SolverConfig) -> int:
    model = load_input(cfg.input)
    out = _out_dir(cfg)
    if not cfg.lambda_grid:
        raise UsageError("sweep needs --lambda-grid lo:hi:n")
    grid = parse_grid(cfg.lambda_grid)
    if cfg.include_zero:
        grid = [0.0] + grid
    objective = ObjectiveSpec(cfg.objective)
    voltage = voltage_spec(cfg, model)
    if voltage.mode == "magnitude":
        raise UsageError("sweep supports --voltage none or box; use sca for magnitude bounds")
    overrides = load_weights(cfg.weights) if cfg.weights else None
    start = time.perf_counter()
    res = lambda_sweep(model, grid, config, objective, voltage, overrides, keep_solutions=True)
    points = []
    devs = []
    for p in res.points:
        d = _deviation(model, p.solution) if p.solution is not None else (math.nan, math.nan)
        devs.append([p.lam, d[0], d[1]])
        points.append(
            {
                "lambda": p.lam,
                "status": p.status,
                "refit_status": p.refit_status,
                "refit_loss_kw": p.refit_loss_w / 1e3,
                "open_switches": _keys(p.topology.open_switches) if p.topology else None,
                "radial": p.topology.radial if p.topology else None,
                "kkt": p.solution.kkt.__dict__ if p.solution is not None else None,
                "verification": _verification(p.solution) if p.solution is not None else None,
                "wall_time_s": p.wall_time,
            }
        )
    _write_csv(
        out / "loss_curve.csv",
        ["lambda", "refit_loss_kw", "open_switches", "radial"],
        [[p.lam, p.refit_loss_w / 1e3, len(p.topology.open_switches) if p.topology else -1, bool(p.topology and p.topology.radial)] for p in res.points],
    )
    _write_csv(
        out / "currents.csv", ["from", "to", "phase"] + [fmt(p.lam) for p in res.points], _currents_rows(model, [p.currents for p in res.points])
    )
    _write_csv(out / "deviation.csv", ["lambda", "delta_p_kw", "delta_q_kvar"], devs)
    _write_json(
        out / "summary.json",
        {"command": "sweep", "input": cfg.input, "objective": cfg.objective, "voltage": cfg.voltage, "points": points, "wall_time_s": time.perf_counter() - start},
    )
    bad = [p for p in res.points if p.status not in ("optimal", "inaccurate")]
    for p in res.points:
        n_open = len(p.topology.open_switches) if p.topology else -1
        print(f"lambda {p.lam:12.6g}  {p.status:10s} open {n_open:3d}  refit {p.refit_loss_w / 1e3:.6g} kW")
    return NON_OPTIMAL if bad else OK


def _cmd_oracle(cfg: RunConfig, config: SolverConfig) -> int:
    model = load_input(cfg.input)
    out = _out_dir(cfg)
    start = time.perf_counter()
    res = exhaustive_oracle(model, ObjectiveSpec(cfg.objective), radial_only=cfg.radial_only, config=config)
    rows = [[";".join(_keys(c)), loss / 1e3, status] for c, loss, status in sorted(res.table, key=lambda r: sorted(r[0]))]
    _write_csv(out / "oracle.csv", ["closed_switches", "refit_loss_kw", "status"], rows)
    found = res.best_topology is not None
    _write_json(
        out / "summary.json",
        {
            "command": "oracle",
            "input": cfg.input,
            "radial_only": cfg.radial_only,
            "evaluated": res.evaluated,
            "best_loss_kw": res.best_loss_w / 1e3 if found else None,
            "open_switches": _keys(res.best_topology.open_switches) if found else None,
            "assignment": {_key(k): v for k, v in res.assignment(model).items()} if found else None,
            "wall_time_s": time.perf_counter() - start,
        },
    )
    if not found:
        print("no feasible configuration", file=sys.stderr)
        return NON_OPTIMAL
    print(f"best of {res.evaluated}: {res.best_loss_w / 1e3:.6g} kW, open {', '.join(_keys(res.best_topology.open_switches))}")
    return OK


def _cmd_baseline(cfg: RunConfig, config: SolverConfig) -> int:
    model = load_input(cfg.input)
    out = _out_dir(cfg)
    start = time.perf_counter()
    res = heuristic_baseline(model, ObjectiveSpec(cfg.objective), config)
    _write_json(
        out / "summary.json",
        {
            "command": "baseline",
            "input": cfg.input,
            "loss_kw": res.loss_w / 1e3,
            "opened_in_order": [_key(k) for k in res.opened],
            "open_switches": _keys(res.topology.open_switches),
            "radial": res.topology.radial,
            "wall_time_s": time.perf_counter() - start,
        },
    )
    _write_csv(out / "baseline_steps.csv", ["step", "opened"], [[i + 1, _key(k)] for i, k in enumerate(res.opened)])
    print(f"baseline: {res.loss_w / 1e3:.6g} kW, open {', '.join(_keys(res.topology.open_switches))}")
    return OK if math.isfinite(res.loss_w) else NON_OPTIMAL


def _cmd_sca(cfg: RunConfig, config: SolverConfig) -> int:
    cfg.voltage = "magnitude"
    model = load_input(cfg.input)
    out = _out_dir(cfg)
    voltage = voltage_spec(cfg, model)
    overrides = load_weights(cfg.weights) if cfg.weights else None
    start = time.perf_counter()
    try:
        res = sca_solve(model, ObjectiveSpec(cfg.objective), cfg.lam, voltage, config, overrides)
    except ScaError as exc:
        _write_json(out / "summary.json", {"command": "sca", "error": str(exc), "certificate": exc.certificate})
        print(f"sca failed: {exc}", file=sys.stderr)
        return NON_OPTIMAL
    sol = res.solution
    _write_csv(
        out / "sca_history.csv",
        ["iteration", "objective", "max_lower_violation", "max_upper_violation", "status"],
        [[h.iteration, h.objective, h.max_lower_violation, h.max_upper_violation, h.status] for h in res.history],
    )
    topo = extract_topology(sol, model)
    dev = _deviation(model, sol)
    _write_csv(out / "deviation.csv", ["lambda", "delta_p_kw", "delta_q_kvar"], [[cfg.lam, dev[0], dev[1]]])
    _write_json(
        out / "summary.json",
        {
            "command": "sca",
            "input": cfg.input,
            "status": sol.status,
            "converged": res.converged,
            "iterations": res.iterations,
            "phase_one_iterations": res.phase_one_iterations,
            "loss_kw": sol.loss_watts() / 1e3,
            "open_switches": _keys(topo.open_switches),
            "kkt": sol.kkt.__dict__,
            "wall_time_s": time.perf_counter() - start,
        },
    )
    print(f"sca: {sol.status} after {res.iterations} iterations, loss {sol.loss_watts() / 1e3:.6g} kW")
    return OK if sol.status in ("optimal", "inaccurate") and res.converged else NON_OPTIMAL


# thresholds applied by `validate`
VALIDATE_LIMITS = {
    "closed-form": {"prop1": 1e-4, "prop2": 1e-4},
    "eta": {"eta_rel": 1e-8},
    "surrogate": {"c1": 1e-9, "c2": 1e-12, "c3": 1e-6},
    "sca": {"objective_increase": 1e-9, "lower_violation": 1e-6, "c1": 1e-9, "c2": 1e-12, "c3": 1e-6, "iterations": 50},
    "linearization": {"ratio": 0.5},
}


def _cmd_validate(cfg: RunConfig, config: SolverConfig) -> int:
    from . import validation as v

    suites = [
        v.prop_suite(cfg.seed, cfg.cases or 100, config),
        v.eta_suite(cfg.seed, cfg.cases or 200),
        v.surrogate_suite(cfg.seed, cfg.cases or 25),
        v.sca_suite(cfg.seed, cfg.cases or 25),
        v.linearization_suite(cfg.seed, cfg.cases or 50),
    ]
    report = {}
    ok = True
    for s in suites:
        limits = VALIDATE_LIMITS.get(s.name, {})
        passed = not s.failures and all(s.worst.get(k, 0.0) <= lim for k, lim in limits.items())
        ok &= passed
        report[s.name] = {"cases": s.cases, "worst": s.worst, "failures": s.failures, "passed": passed}
        worst = ", ".join(f"{k}={val:.3g}" for k, val in sorted(s.worst.items()))
        print(f"{'PASS' if passed else 'FAIL'} {s.name:14s} cases={s.cases:4d}  {worst}")
    if cfg.out:
        _write_json(_out_dir(cfg) / "summary.json", {"command": "validate", "seed": cfg.seed, "suites": report})
    return OK if ok else NON_OPTIMAL


def _cmd_report(cfg: RunConfig, config: SolverConfig) -> int:
    model = load_input(cfg.input)
    loads = sum(n.load_vector().reshape(2, -1).sum(axis=1) for n in model.nodes if n.load)
    loads = np.zeros(2) if np.isscalar(loads) else loads
    phases = {len(l.phases) for l in model.lines}
    info = {
        "name": model.name,
        "nodes": len(model.nodes),
        "lines": len(model.lines),
        "switches": len(model.switch_keys),
        "normally_open": _keys(l.key for l in model.lines if l.normally_open),
        "line_phase_counts": sorted(phases),
        "dg_nodes": [n.id for n in model.nodes if n.dg and not n.is_substation],
        "total_load_kw": float(loads[0]) / 1e3,
        "total_load_kvar": float(loads[1]) / 1e3,
        "v_nominal_kv": model.v_nominal_kv,
        "s_base_kva": model.s_base_kva,
        "substation": model.substation.id,
    }
    for k, val in info.items():
        print(f"{k:18s} {val}")
    if cfg.out:
        _write_json(_out_dir(cfg) / "summary.json", {"command": "report", **info})
    return OK


HANDLERS = {
    "solve": _cmd_solve,
    "sweep": _cmd_sweep,
    "oracle": _cmd_oracle,
    "baseline": _cmd_baseline,
    "sca": _cmd_sca,
    "validate": _cmd_validate,
    "report": _cmd_report,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; diagnostics go to stderr and the exit code is returned."""
    try:
        if cfg.command not in HANDLERS:
            raise UsageError(f"unknown command {cfg.command!r}")
        if cfg.objective not in OBJECTIVES:
            raise UsageError(f"unknown objective {cfg.objective!r}")
        if cfg.voltage not in VOLTAGE_MODES:
            raise UsageError(f"unknown voltage mode {cfg.voltage!r}")
        if cfg.lam < 0:
            raise UsageError("--lambda must be nonnegative")
        config = SolverConfig(tol=cfg.tol)
        return HANDLERS[cfg.command](cfg, config)
    except (UsageError, ParseError, ModelError, FormulationError, RefitError, OracleGuardError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gridreconf", description="Group-sparse reconfiguration of distribution feeders.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--input", help="network JSON file or bundled feeder name")
    p.add_argument("--objective", default="loss", choices=OBJECTIVES)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="sparsity weight in volts")
    p.add_argument("--lambda-grid", help="lo:hi:n logarithmic grid for sweep")
    p.add_argument("--include-zero", action="store_true", help="prepend lambda = 0 to the sweep grid")
    p.add_argument("--weights", help="JSON file of per-line lambda overrides")
    p.add_argument("--voltage", default="none", choices=VOLTAGE_MODES)
    p.add_argument("--vmin", type=float, default=0.95)
    p.add_argument("--vmax", type=float, default=1.05)
    p.add_argument("--target-closed", type=int, help="pick lambda so that this many switches stay closed")
    p.add_argument("--radial-only", action="store_true")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--cases", type=int, help="cases per validation suite")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE
    return run(RunConfig(**vars(ns)))


if __name__ == "__main__":
    sys.exit(main())
