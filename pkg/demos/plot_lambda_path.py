"""
Regularization path on the 33-node feeder
=========================================

Sweeping lambda traces how switches open as the penalty grows. The loss
of the penalized optimum grows with lambda, but the set of open switches
does not only grow: on this feeder a switch that opened at moderate lambda
closes again once shrinkage hits every line at once.
"""

import numpy as np

from gridreconf import datasets
from gridreconf.pipeline import lambda_sweep

model = datasets.load("baran33")
grid = [0.0] + list(np.geomspace(1, 1e4, 20))
res = lambda_sweep(model, grid, workers=2)

# %%
# Path summary
# ------------

print(f"{'lambda':>10} {'open':>5} {'penalized kW':>13} {'refit kW':>9}  open switches")
for p in res.points:
    print(
        f"{p.lam:10.2f} {len(p.topology.open_switches):5d} {p.regularized_loss_w / 1e3:13.3f} "
        f"{p.refit_loss_w / 1e3:9.3f}  {sorted(p.topology.open_switches)}"
    )

# %%
# Current on one switch
# ---------------------
# Line (13,14) is zero in the middle of the path and carries current again
# at the end of it.

keys, mat = res.current_matrix()
rows = [i for i, (key, _) in enumerate(keys) if key == (13, 14)]
for lam, amps in zip(grid, mat[rows[0]]):
    print(f"lambda {lam:9.2f}   |I(13,14)| = {amps:8.3f} A")
