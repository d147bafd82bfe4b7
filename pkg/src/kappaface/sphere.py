"""Directional statistics on the unit hypersphere S^{d-1}.

Normalization, resultant length, the Banerjee concentration estimate,
the von Mises-Fisher log-density and an exact vMF sampler (Wood, 1994).
All arithmetic is float64.
"""

from dataclasses import dataclass
import math

import numpy as np

from .bessel import SERIES_CUTOFF, log_iv, log_iv_series_sum
from .errors import (
    DimensionMismatchError,
    EmptySetError,
    InvalidDimensionError,
    ZeroVectorError,
)

__all__ = [
    "NORM_EPS",
    "R_BAR_CLAMP",
    "KAPPA_CAP",
    "VmfParams",
    "normalize",
    "normalize_rows",
    "resultant_length",
    "estimate_kappa",
    "log_vmf_normalizer",
    "vmf_log_density",
    "sample_vmf",
    "sample_uniform_sphere",
]

NORM_EPS = 1e-12
R_BAR_CLAMP = 1.0 - 1e-9
KAPPA_CAP = 1e7


@dataclass(frozen=True)
class VmfParams:
    """Mean direction and concentration of a vMF distribution."""

    mean_direction: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mean_direction, dtype=np.float64)
        if mu.ndim != 1 or mu.shape[0] < 2:
            raise InvalidDimensionError(f"mean direction must be a vector with d >= 2, got shape {mu.shape}")
        if abs(np.linalg.norm(mu) - 1.0) > 1e-9:
            raise ZeroVectorError("mean direction must be unit norm; pass it through normalize() first")
        if not (math.isfinite(self.kappa) and self.kappa >= 0):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        object.__setattr__(self, "mean_direction", mu)

    @property
    def dim(self):
        return self.mean_direction.shape[0]


def normalize(v, eps=NORM_EPS):
    """Scale ``v`` to unit Euclidean norm.

    Raises
    ------
    ZeroVectorError
        If ``||v|| <= eps``.
    InvalidDimensionError
        If ``v`` has fewer than two components.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 2:
        raise InvalidDimensionError(f"expected a vector with d >= 2, got shape {v.shape}")
    n = np.linalg.norm(v)
    if not n > eps:
        raise ZeroVectorError(f"cannot normalize a vector of norm {n:.3g}")
    return v / n


def normalize_rows(m, eps=NORM_EPS):
    """Row-wise version of :func:`normalize`; returns ``(unit_rows, norms)``."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    if np.any(~(norms > eps)):
        bad = int(np.flatnonzero(~(norms > eps))[0])
        raise ZeroVectorError(f"row {bad} has norm {norms[bad]:.3g}")
    return m / norms[:, None], norms


def resultant_length(samples):
    """Mean resultant length ``||sum_i x_i|| / n`` of unit vectors."""
    if len(samples) == 0:
        raise EmptySetError("resultant length of an empty set")
    try:
        x = np.asarray(samples, dtype=np.float64)
    except ValueError as exc:
        raise DimensionMismatchError("samples have differing dimensions") from exc
    if x.ndim != 2:
        raise DimensionMismatchError(f"expected an n x d array, got shape {x.shape}")
    return float(np.linalg.norm(x.sum(axis=0)) / x.shape[0])


def estimate_kappa(r_bar, d):
    """Banerjee et al. approximation ``r (d - r^2) / (1 - r^2)``.

    ``r_bar`` may be a scalar or an array. Values at or above ``1 - 1e-9`` are
    clamped and the estimate is capped at ``KAPPA_CAP``.
    """
    if int(d) != d or d < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {d}")
    r = np.asarray(r_bar, dtype=np.float64)
    if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
        raise ValueError("r_bar must lie in [0, 1]")
    r = np.minimum(r, R_BAR_CLAMP)
    r2 = r * r
    kappa = np.minimum(r * (d - r2) / (1.0 - r2), KAPPA_CAP)
    return float(kappa) if kappa.ndim == 0 else kappa


def log_vmf_normalizer(kappa, d):
    """log C_d(kappa), with ``C_d = kappa^{d/2-1} / ((2 pi)^{d/2} I_{d/2-1}(kappa))``.

    Finite at ``kappa = 0``, where it equals minus the log surface area of S^{d-1}.
    """
    nu = 0.5 * d - 1.0
    if kappa < max(SERIES_CUTOFF, nu):
        # the kappa^nu factors cancel analytically in the series regime
        return (-0.5 * d * math.log(2.0 * math.pi) + nu * math.log(2.0)
                + math.lgamma(nu + 1.0) - log_iv_series_sum(nu, kappa))
    return nu * math.log(kappa) - 0.5 * d * math.log(2.0 * math.pi) - log_iv(nu, kappa)


def vmf_log_density(x, params):
    """Log-density of ``vMF(params)`` at unit vector(s) ``x`` (shape d or n x d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.dim:
        raise DimensionMismatchError(f"x has dimension {x.shape[-1]}, distribution has {params.dim}")
    out = log_vmf_normalizer(params.kappa, params.dim) + params.kappa * (x @ params.mean_direction)
    return float(out) if np.ndim(out) == 0 else out


def sample_uniform_sphere(n, d, rng):
    """``n`` i.i.d. uniform draws on S^{d-1}."""
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _sample_axial(kappa, d, n, rng):
    # Wood (1994): envelope-rejection draw of w = mu^T x
    m1 = d - 1.0
    b = m1 / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + m1 * m1))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m1 * math.log(1.0 - x0 * x0)
    out = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        batch = max(16, int(need * 1.3))
        z = rng.beta(0.5 * m1, 0.5 * m1, size=batch)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=batch)
        ok = kappa * w + m1 * np.log1p(-x0 * w) - c >= np.log(u)
        acc = w[ok][:need]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def sample_vmf(params, n, seed):
    """Draw ``n`` samples from ``vMF(params)`` as an ``n x d`` array.

    ``seed`` is an integer or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d = params.dim
    w = _sample_axial(params.kappa, d, n, rng)
    v = rng.standard_normal((n, d - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # samples around e1, then reflect e1 onto the mean direction
    x = np.empty((n, d))
    x[:, 0] = w
    x[:, 1:] = np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v
    mu = params.mean_direction
    u = np.zeros(d)
    u[0] = 1.0
    u -= mu
    un = u @ u
    if un > 1e-24:
        x -= np.outer(x @ u, u) * (2.0 / un)
    return x / np.linalg.norm(x, axis=1, keepdims=True)
