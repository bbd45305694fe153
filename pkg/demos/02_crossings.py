"""Crossing frequencies and the threshold estimate on the Voronoi side.

Every scene stores the level at which its long-way crossing of the 3L x L
rectangle first appears, so one pass over the scenes gives the whole
frequency curve.  Bisection then locates the level where half the scenes
cross.

    python3 demos/02_crossings.py
"""

import numpy as np

from fpplab import percolation

L, reps = 12.0, 120
crit = percolation.scene_critical_values("voronoi", L, reps, master_seed=3)
print(f"L = {L:g}, {reps} scenes")
for p in np.linspace(0.55, 0.85, 7):
    print(f"  p = {p:.2f}: crossing frequency {np.mean(p > crit):.3f}")

est = percolation.estimate_pc_star([8.0, 16.0], 150, tol=0.01, master_seed=3)
for L, e, hw, e90 in zip(est.L_list, est.estimate, est.half_width, est.estimate_90):
    print(f"L = {L:4g}: half-frequency point {e:.4f} +- {hw:.4f}, 0.9-point {e90:.4f}")
print("proxy:", est.proxy)
