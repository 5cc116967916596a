"""
Voltage limits: a convex box and a successive approximation
===========================================================

Two ways to keep voltages near nominal. A box on the real and imaginary
parts of each node voltage stays convex. A lower bound on the magnitude is
not convex, so it is replaced by a linear surrogate that is refreshed until
the iterates settle.
"""

import math

import numpy as np

from gridreconf import datasets
from gridreconf.formulation import ObjectiveSpec, VoltageSpec, build_problem
from gridreconf.loads import load_deviation
from gridreconf.pipeline import extract_topology, refit, sca_solve
from gridreconf.solver import solve
from gridreconf.validation import random_magnitude_instance

# %%
# Box constraints on the modified IEEE-37 feeder
# ----------------------------------------------

model = datasets.load("ieee37_test2")
box = VoltageSpec.box_around_nominal(model, 0.05 / math.sqrt(2))
for lam in (300.0, 1000.0):
    topo = extract_topology(solve(build_problem(model, ObjectiveSpec(), lam, box)), model)
    rsol, loss = refit(model, topo)
    dp, dq = load_deviation(model, rsol)
    print(f"lambda {lam:6.0f}: open {sorted(topo.open_switches)}")
    print(f"    radial {topo.radial}, refit {loss / 1e3:.2f} kW, dP {dp / 1e3:.2f} kW, dQ {dq / 1e3:.2f} kVAr")

# %%
# Magnitude bound by successive approximation
# -------------------------------------------
# A random feeder whose lowest voltage sits below the requested minimum.

rng = np.random.default_rng(5)
inst = None
while inst is None:
    inst = random_magnitude_instance(rng)
feeder, spec = inst
res = sca_solve(feeder, ObjectiveSpec(), 0.0, spec)
for i, step in enumerate(res.history):
    print(f"iteration {i:2d}: objective {step.objective:.6e}  lower-bound violation {step.max_lower_violation:.1e}")
print("converged:", res.converged)
