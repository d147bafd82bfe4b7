"""Softmax and margin-softmax losses with analytic gradients.

Families
--------
plain_softmax
    Cross-entropy on raw logits ``z . W_j`` (zero bias, no normalization).
norm_softmax
    Cross-entropy on ``s cos(theta_j)`` with l2-normalized rows.
arcface
    Target logit ``s cos(theta_y + m0)``.
cosface
    Target logit ``s (cos(theta_y) - m0)``.
kappaface
    Target logit ``s cos(theta_y + psi_y m0)`` with a per-class factor ``psi``.

All angular families share one code path: a per-sample additive angle on the
target column. A zero margin bypasses the arccos round trip, so
``kappaface(psi = 0)`` and ``norm_softmax`` coincide bit for bit.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ConfigError, ConfigMismatchError, NonUnitInputError

__all__ = [
    "FAMILIES",
    "MarginLossConfig",
    "LossBatchResult",
    "forward",
    "backward",
    "loss_and_grads",
    "plain_softmax_forward",
    "target_margins",
]

FAMILIES = ("plain_softmax", "norm_softmax", "arcface", "cosface", "kappaface")
UNIT_TOL = 1e-3


@dataclass(frozen=True)
class MarginLossConfig:
    family: str = "kappaface"
    scale: float = 64.0
    m0: float = 0.5
    clamp_eps: float = 1e-7

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown loss family {self.family!r}; choose from {FAMILIES}")
        if not self.scale > 0:
            raise ConfigError(f"scale must be > 0, got {self.scale}")
        hi = 1.0 if self.family == "cosface" else math.pi
        if not 0.0 <= self.m0 < hi:
            raise ConfigError(f"margin for {self.family} must lie in [0, {hi:g}), got {self.m0}")
        if not 0.0 < self.clamp_eps < 0.5:
            raise ConfigError(f"clamp_eps must lie in (0, 0.5), got {self.clamp_eps}")

    @property
    def angular(self):
        return self.family != "plain_softmax"


@dataclass
class LossBatchResult:
    loss: float
    probs: np.ndarray
    logits: np.ndarray
    cos: np.ndarray
    grad_logit_cos: np.ndarray
    grad_embeddings: np.ndarray = None
    grad_class_weights: np.ndarray = None


def _log_softmax_terms(logits, labels):
    top = logits.argmax(axis=1)
    rows = np.arange(logits.shape[0])
    shifted = logits - logits[rows, top][:, None]
    # log1p over the non-max terms keeps precision when the loss is tiny
    e = np.exp(shifted)
    e[rows, top] = 0.0
    lse = np.log1p(e.sum(axis=1, keepdims=True))
    log_p = shifted - lse
    return -log_p[rows, labels], np.exp(log_p)


def _softmax_grad(probs, labels):
    # p - onehot, with the target entry formed as minus the off-target mass
    g = probs.copy()
    rows = np.arange(probs.shape[0])
    g[rows, labels] = 0.0
    g[rows, labels] = -g.sum(axis=1)
    return g


def plain_softmax_forward(logits, labels):
    """Mean cross-entropy (nats) of ``logits`` against integer ``labels``."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    nll, _ = _log_softmax_terms(logits, labels)
    return float(nll.mean())


def target_margins(labels, config, psi=None):
    """Per-sample margin applied to the target logit."""
    labels = np.asarray(labels, dtype=np.int64)
    fam = config.family
    if fam == "kappaface":
        if psi is None:
            raise ConfigMismatchError("kappaface needs per-class psi")
        return np.asarray(psi, dtype=np.float64)[labels] * config.m0
    if psi is not None:
        raise ConfigMismatchError(f"psi is only accepted by kappaface, not {fam}")
    if fam in ("arcface", "cosface"):
        return np.full(labels.shape[0], float(config.m0))
    return np.zeros(labels.shape[0])


def _check_unit(name, m):
    dev = np.abs(np.linalg.norm(m, axis=1) - 1.0)
    if dev.size and dev.max() > UNIT_TOL:
        raise NonUnitInputError(f"{name} row {int(dev.argmax())} has norm deviating by {dev.max():.3g}")


def forward(embeddings, class_weights, labels, psi, config):
    """Batch loss, probabilities and ``dL/dcos``.

    Parameters
    ----------
    embeddings : (B, d) unit rows (raw rows for ``plain_softmax``)
    class_weights : (C, d) unit rows (raw rows for ``plain_softmax``)
    labels : (B,) class ids
    psi : (C,) calibration factors for ``kappaface``, otherwise None
    config : MarginLossConfig

    Returns
    -------
    LossBatchResult
        ``loss`` is the batch mean. ``grad_logit_cos`` is the derivative of
        that mean with respect to each ``cos(theta_ij)`` (for
        ``plain_softmax``: with respect to each raw logit).
    """
    Z = np.asarray(embeddings, dtype=np.float64)
    W = np.asarray(class_weights, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    C = W.shape[0]
    if Z.ndim != 2 or W.ndim != 2 or Z.shape[1] != W.shape[1]:
        raise ConfigMismatchError(f"embedding shape {Z.shape} incompatible with class weights {W.shape}")
    if labels.shape != (Z.shape[0],):
        raise ConfigMismatchError("need one label per embedding")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ConfigMismatchError(f"labels must lie in [0, {C})")
    if psi is not None and np.shape(psi) != (C,):
        raise ConfigMismatchError(f"psi has length {np.size(psi)}, expected {C}")
    margins = target_margins(labels, config, psi)
    B = Z.shape[0]
    rows = np.arange(B)
    cos = Z @ W.T

    if not config.angular:
        nll, probs = _log_softmax_terms(cos, labels)
        grad = _softmax_grad(probs, labels) / B
        return LossBatchResult(float(nll.mean()), probs, cos, cos, grad)

    _check_unit("embedding", Z)
    _check_unit("class weight", W)
    s = config.scale
    c_t = cos[rows, labels]
    target = c_t.copy()
    dtarget = np.ones(B)
    if config.family == "cosface":
        target = c_t - margins
    else:
        on = margins > 0
        if np.any(on):
            eps = config.clamp_eps
            u = np.clip(c_t[on], -1.0 + eps, 1.0 - eps)
            theta = np.arccos(u)
            phi = theta + margins[on]
            # past pi the shifted cosine would turn back up; pin it at -1
            over = phi >= math.pi
            phi = np.where(over, math.pi, phi)
            target[on] = np.where(over, -1.0, np.cos(phi))
            dtarget[on] = np.where(over, 0.0, np.sin(phi) / np.sqrt(1.0 - u * u))

    logits = s * cos
    logits[rows, labels] = s * target
    nll, probs = _log_softmax_terms(logits, labels)
    g = s * _softmax_grad(probs, labels) / B
    g[rows, labels] *= dtarget
    return LossBatchResult(float(nll.mean()), probs, logits, cos, g)


def _through_normalization(grad_unit, raw):
    # d/dv of f(v / |v|) = (I - u u^T) grad_u / |v|
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    u = raw / norms
    return (grad_unit - np.sum(grad_unit * u, axis=1, keepdims=True) * u) / norms


def backward(result, embeddings, class_weights, labels=None, psi=None, config=None):
    """Gradients of the batch loss with respect to the raw rows.

    ``embeddings`` and ``class_weights`` are the pre-normalization arrays
    whose normalized rows were given to :func:`forward`; the l2 normalization
    is differentiated through. Passing unit rows gives the tangent-space
    gradients. For ``plain_softmax`` no normalization is involved.

    Returns ``(grad_embeddings, grad_class_weights)`` and stores them on
    ``result``.
    """
    Z = np.asarray(embeddings, dtype=np.float64)
    W = np.asarray(class_weights, dtype=np.float64)
    G = result.grad_logit_cos
    if config is not None and not config.angular:
        gZ, gW = G @ W, G.T @ Z
    else:
        Zu = Z / np.linalg.norm(Z, axis=1, keepdims=True)
        Wu = W / np.linalg.norm(W, axis=1, keepdims=True)
        gZ = _through_normalization(G @ Wu, Z)
        gW = _through_normalization(G.T @ Zu, W)
    result.grad_embeddings = gZ
    result.grad_class_weights = gW
    return gZ, gW


def loss_and_grads(raw_embeddings, raw_class_weights, labels, psi, config):
    """Normalize (angular families), run :func:`forward` then :func:`backward`."""
    Z = np.asarray(raw_embeddings, dtype=np.float64)
    W = np.asarray(raw_class_weights, dtype=np.float64)
    if config.angular:
        Zu = Z / np.linalg.norm(Z, axis=1, keepdims=True)
        Wu = W / np.linalg.norm(W, axis=1, keepdims=True)
    else:
        Zu, Wu = Z, W
    result = forward(Zu, Wu, labels, psi, config)
    backward(result, Z, W, labels, psi, config)
    return result
