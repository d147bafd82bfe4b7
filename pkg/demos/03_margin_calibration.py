"""
Per-class margin calibration
============================

Each class gets psi in [0, 1]: a blend of a concentration weight (diffuse
classes get larger margins) and a population weight (rare classes get
larger margins). The effective margin is psi * m0.
"""

import numpy as np

from kappaface.scheduler import (SchedulerConfig, compute_psi, concentration_weight, population_weight,
                                 weights_from_standardized)

# Four extreme classes: (standardized concentration, population).
classes = {"A: diffuse, common": (-1.58, 631), "B: tight, common": (4.96, 570),
           "C: diffuse, rare": (-3.56, 13), "D: tight, rare": (5.44, 7)}
cfg = SchedulerConfig(temperature=0.55, gamma=0.5, m0=0.5, K=840)
kt, n = (np.array(v) for v in zip(*classes.values()))
w = weights_from_standardized(kt, n, cfg)
for name, wc, wp, p in zip(classes, w.w_conc, w.w_pop, w.psi):
    print(f"{name:20s} w_conc={wc:.3f} w_pop={wp:.3f} psi={p:.3f} margin={p * cfg.m0:.3f} rad")

# Temperature pulls the concentration weight towards 0.5.
grid = np.linspace(-3, 3, 7)
for T in [0.2, 0.55, 1.0]:
    print(f"T={T:4.2f} w_conc over kappa_tilde {grid.tolist()}:", np.round(concentration_weight(grid, T), 3))

# Population weight runs from 1 (empty) to 0 (largest class).
print("w_pop at n/K = 0, .25, .5, .75, 1:", np.round(population_weight(np.array([0, 210, 420, 630, 840]), 840), 3))

# From raw concentration estimates: standardization happens inside compute_psi.
rng = np.random.default_rng(0)
kappa_hat = rng.uniform(10, 300, 8)
pops = rng.integers(5, 500, 8)
weights = compute_psi(kappa_hat, pops, SchedulerConfig(K=int(pops.max())))
for k, p_, s in zip(kappa_hat, pops, weights.psi):
    print(f"kappa_hat={k:6.1f} n={p_:4d} -> psi={s:.3f}")
