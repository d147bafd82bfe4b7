"""
Margin ablation on a noisy imbalanced benchmark
===============================================

Adaptive margins against a fixed additive angular margin and against the
adaptive margin without its population term, on the same seeded data.
Pass the number of seeds as the first argument (default 2; the acceptance
suite uses 5).
"""

import sys
import time

from kappaface.benchmark import run_ablation

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 2)
t0 = time.perf_counter()
acc = run_ablation(seeds, progress=lambda s, name, a: print(f"seed {s} {name:22s} holdout acc {a:.4f}"))
print(f"\n{time.perf_counter() - t0:.0f}s")
for name, values in acc.items():
    print(f"{name:22s} mean {values.mean():.4f}  std {values.std():.4f}")
