"""
Verification metrics
====================

Best-threshold accuracy, TAR at fixed FAR and the ROC curve from a list of
labelled pairs.
"""

import numpy as np

from kappaface.evaluation import evaluate_pairs

rng = np.random.default_rng(0)

# Build embeddings so that pair similarities follow two overlapping bumps.
n_pos, n_neg = 2000, 20000
same = np.r_[np.ones(n_pos, bool), np.zeros(n_neg, bool)]
sims = np.clip(rng.normal(np.where(same, 0.6, 0.1), 0.15), -1, 1)
E = np.zeros((2 * sims.size, 2))
E[0::2] = [1.0, 0.0]
E[1::2] = np.c_[sims, np.sqrt(1 - sims ** 2)]
k = np.arange(sims.size)
pairs = np.c_[2 * k, 2 * k + 1, same.astype(int)]

report = evaluate_pairs(E, pairs)
print(f"accuracy {report.accuracy:.4f} at threshold {report.best_threshold:.4f}")
for level, tar in sorted(report.tar_at_far.items(), reverse=True):
    print(f"TAR @ FAR={level:g}: {tar:.4f}")

far, tar = np.array(report.roc).T
for target in [1e-3, 1e-2, 1e-1, 0.5]:
    i = np.searchsorted(far, target, side="right") - 1
    print(f"ROC point near FAR {target:g}: far={far[i]:.4g} tar={tar[i]:.4f}")
