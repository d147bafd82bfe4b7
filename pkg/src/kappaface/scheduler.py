"""Per-class margin calibration from concentrations and populations.

Each class c gets a calibration factor ``psi_c`` in [0, 1]. It is a convex
blend of a concentration weight (low for tightly clustered classes) and a
population weight (low for well populated classes). The effective additive
angular margin of the class is ``psi_c * m0``.
"""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .errors import ConfigError, ConfigMismatchError, PopulationExceedsMaxError

__all__ = [
    "SchedulerConfig",
    "ClassWeights",
    "standardize_kappas",
    "concentration_weight",
    "population_weight",
    "weights_from_standardized",
    "compute_psi",
    "initial_weights",
    "write_weights_csv",
    "WEIGHTS_HEADER",
]

WEIGHTS_HEADER = ["class_id", "n_c", "kappa_hat", "kappa_tilde", "w_conc", "w_pop", "psi"]


@dataclass(frozen=True)
class SchedulerConfig:
    temperature: float = 0.55
    gamma: float = 0.5
    m0: float = 0.5
    K: int = 1

    def __post_init__(self):
        if not 0.0 < self.temperature <= 1.0:
            raise ConfigError(f"temperature must lie in (0, 1], got {self.temperature}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 < self.m0 < math.pi:
            raise ConfigError(f"m0 must lie in (0, pi), got {self.m0}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")


@dataclass(frozen=True)
class ClassWeights:
    """Immutable per-class snapshot, swapped in once per epoch."""

    kappa_tilde: np.ndarray
    w_conc: np.ndarray
    w_pop: np.ndarray
    psi: np.ndarray
    epoch: int = 0
    kappa_hat: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("kappa_tilde", "w_conc", "w_pop", "psi", "kappa_hat"):
            value = getattr(self, name)
            if value is not None:
                arr = np.array(value, dtype=np.float64)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)


def standardize_kappas(kappa_hat):
    """Zero-mean, unit population-std standardization.

    All-equal input (std 0) maps to all zeros.
    """
    k = np.asarray(kappa_hat, dtype=np.float64)
    if k.ndim != 1 or k.size == 0:
        raise ValueError("kappa_hat must be a nonempty vector")
    mu = k.mean()
    sigma = np.sqrt(np.mean((k - mu) ** 2))
    if sigma == 0.0 or sigma <= 1e-12 * max(1.0, abs(mu)):
        return np.zeros_like(k)
    return (k - mu) / sigma


def _sigmoid(x):
    # split form avoids overflow of exp for large |x|
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def concentration_weight(kappa_tilde, temperature):
    """``1 - sigmoid(kappa_tilde * T)``; 0.5 at the mean concentration."""
    if not 0.0 < temperature <= 1.0:
        raise ConfigError(f"temperature must lie in (0, 1], got {temperature}")
    w = 1.0 - _sigmoid(np.asarray(kappa_tilde, dtype=np.float64) * temperature)
    return float(w) if w.ndim == 0 else w


def population_weight(n_c, K):
    """``(cos(pi n_c / K) + 1) / 2``: 1 for an empty class, 0 for the largest."""
    n = np.asarray(n_c, dtype=np.float64)
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    if np.any(n < 0):
        raise ValueError("populations must be nonnegative")
    if np.any(n > K):
        raise PopulationExceedsMaxError(f"population {n.max():g} exceeds K={K}")
    w = 0.5 * (np.cos(np.pi * n / K) + 1.0)
    return float(w) if w.ndim == 0 else w


def weights_from_standardized(kappa_tilde, n, config, epoch=0, kappa_hat=None, use_population=True):
    """Build :class:`ClassWeights` from already standardized concentrations.

    ``use_population=False`` drops the population term (``psi = w_conc``).
    """
    kt = np.asarray(kappa_tilde, dtype=np.float64)
    n = np.asarray(n)
    if kt.shape != n.shape:
        raise ConfigMismatchError(f"{kt.shape[0]} concentrations but {n.shape[0]} populations")
    w_conc = concentration_weight(kt, config.temperature)
    w_pop = population_weight(n, config.K)
    gamma = config.gamma if use_population else 0.0
    psi = gamma * w_pop + (1.0 - gamma) * w_conc
    return ClassWeights(np.atleast_1d(kt), np.atleast_1d(w_conc), np.atleast_1d(w_pop),
                        np.atleast_1d(psi), epoch, kappa_hat)


def compute_psi(kappa_hat, n, config, epoch=0, use_population=True):
    """Calibration factors ``psi_c = gamma w_pop + (1 - gamma) w_conc``."""
    kappa_hat = np.asarray(kappa_hat, dtype=np.float64)
    return weights_from_standardized(standardize_kappas(kappa_hat), n, config, epoch,
                                     kappa_hat=kappa_hat, use_population=use_population)


def initial_weights(n, config, use_population=True):
    """Weights for the first epoch, before any concentration is available.

    Every class sits at the mean concentration, so ``w_conc = 0.5``.
    """
    n = np.asarray(n)
    return weights_from_standardized(np.zeros(n.shape[0]), n, config, epoch=0,
                                     use_population=use_population)


def write_weights_csv(path, weights, n, m0=None, header_comment=None):
    """Per-class report, 6 significant digits.

    When ``m0`` is given an extra ``margin`` column holds ``psi_c * m0``.
    """
    header = list(WEIGHTS_HEADER) + (["margin"] if m0 is not None else [])
    kappa_hat = weights.kappa_hat
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for c in range(len(weights.psi)):
            kh = "" if kappa_hat is None else f"{kappa_hat[c]:.6g}"
            row = [c, int(n[c]), kh, f"{weights.kappa_tilde[c]:.6g}", f"{weights.w_conc[c]:.6g}",
                   f"{weights.w_pop[c]:.6g}", f"{weights.psi[c]:.6g}"]
            if m0 is not None:
                row.append(f"{weights.psi[c] * m0:.6g}")
            w.writerow(row)
