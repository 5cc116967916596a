"""Group-sparse convex reconfiguration of three-phase distribution feeders."""

from .formulation import (
    FormulationError,
    ObjectiveSpec,
    VoltageSpec,
    add_voltage_box,
    build_p2,
    build_problem,
    build_sca_subproblem,
)
from .loads import (
    exponential_injection,
    radial_power_flow,
    linear_injection,
    load_deviation,
    transformer_adjusted_load,
)
from .network import (
    ModelError,
    NetworkModel,
    ParseError,
    build_incidence,
    enumerate_cycles,
    parse_network,
    serialize_network,
    switch_free_path,
)
from .pipeline import (
    Topology,
    auto_lambda,
    exhaustive_oracle,
    extract_topology,
    heuristic_baseline,
    lambda_sweep,
    refit,
    sca_solve,
)
from .solver import SolverConfig, solve, solve_eta, verify_prop1, verify_prop2
from . import datasets

__version__ = "0.1.0"
