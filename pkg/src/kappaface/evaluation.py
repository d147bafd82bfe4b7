"""1:1 verification metrics over labelled pairs of unit embeddings."""

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import DegeneratePairsError

__all__ = ["VerificationReport", "pair_similarities", "roc_points", "evaluate_pairs",
           "write_roc", "write_report", "DEFAULT_FAR_LEVELS"]

DEFAULT_FAR_LEVELS = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass
class VerificationReport:
    accuracy: float
    best_threshold: float
    tar_at_far: dict = field(default_factory=dict)
    roc: list = field(default_factory=list)
    num_pos: int = 0
    num_neg: int = 0


def pair_similarities(embeddings, pairs):
    """Cosine similarity for each ``(i, j, same)`` row of ``pairs``."""
    E = np.asarray(embeddings, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)
    if pairs.size and (pairs[:, :2].min() < 0 or pairs[:, :2].max() >= E.shape[0]):
        raise IndexError("pair index out of range")
    return np.einsum("ij,ij->i", E[pairs[:, 0]], E[pairs[:, 1]]), pairs[:, 2].astype(bool)


def _sweep(sims, same):
    # thresholds: +inf, midpoints between distinct sorted sims (descending), -inf;
    # a pair is accepted when sim >= threshold
    uniq = np.unique(sims)[::-1]
    mids = 0.5 * (uniq[:-1] + uniq[1:])
    thresholds = np.concatenate([[np.inf], mids, [-np.inf]])
    pos = np.sort(sims[same])
    neg = np.sort(sims[~same])
    tp = pos.size - np.searchsorted(pos, thresholds, side="left")
    fp = neg.size - np.searchsorted(neg, thresholds, side="left")
    return thresholds, tp, fp


def roc_points(sims, same):
    """``(far, tar)`` arrays over the full threshold sweep, ascending in FAR."""
    sims = np.asarray(sims, dtype=np.float64)
    same = np.asarray(same, dtype=bool)
    _, tp, fp = _sweep(sims, same)
    return fp / max(1, (~same).sum()), tp / max(1, same.sum())


def evaluate_pairs(embeddings, pairs, far_levels=DEFAULT_FAR_LEVELS):
    """Best-threshold accuracy, TAR at fixed FAR levels and the ROC curve.

    A FAR level is reported only when there are at least ``1 / level``
    negative pairs. TAR@FAR is the highest TAR over thresholds whose FAR does
    not exceed the level.
    """
    sims, same = pair_similarities(embeddings, pairs)
    n_pos, n_neg = int(same.sum()), int((~same).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegeneratePairsError(f"need both positive and negative pairs (got {n_pos} / {n_neg})")
    thresholds, tp, fp = _sweep(sims, same)
    correct = tp + (n_neg - fp)
    best = int(np.argmax(correct))
    far = fp / n_neg
    tar = tp / n_pos
    tar_at = {}
    for level in far_levels:
        if n_neg * level < 1.0 - 1e-9:
            continue
        ok = far <= level
        tar_at[float(level)] = float(tar[ok].max())
    return VerificationReport(
        accuracy=float(correct[best] / (n_pos + n_neg)),
        best_threshold=float(np.clip(thresholds[best], -1.0, 1.0)),
        tar_at_far=tar_at,
        roc=list(zip(far.tolist(), tar.tolist())),
        num_pos=n_pos,
        num_neg=n_neg,
    )


def write_roc(report, path):
    with open(path, "w") as fh:
        for f, t in report.roc:
            fh.write(f"{f:.6g}\t{t:.6g}\n")


def write_report(report, path):
    """Flat JSON object, reals at 6 significant digits."""
    flat = {"accuracy": float(f"{report.accuracy:.6g}"),
            "best_threshold": float(f"{report.best_threshold:.6g}"),
            "num_pos": report.num_pos,
            "num_neg": report.num_neg}
    for level, value in sorted(report.tar_at_far.items(), reverse=True):
        flat[f"tar_at_far_{level:g}"] = float(f"{value:.6g}")
    with open(path, "w") as fh:
        json.dump(flat, fh, indent=1)
        fh.write("\n")
