"""Multilayer perceptron embedding network with hand-written backprop.

Weights are stored ``fan_in x fan_out`` so a layer computes ``h @ W + b``.
Hidden layers use the chosen activation; the output layer is linear.
"""

from dataclasses import dataclass, field
import struct

import numpy as np

from .errors import DimensionMismatchError, FormatError, StaleCacheError

__all__ = [
    "MlpParams",
    "ClassifierParams",
    "init_mlp",
    "init_classifier",
    "mlp_forward",
    "mlp_backward",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = b"KMM1"
ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpParams:
    weights: list
    biases: list
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise DimensionMismatchError(f"layer {k}: weight {W.shape} and bias {b.shape} disagree")
            if k and self.weights[k - 1].shape[1] != W.shape[0]:
                raise DimensionMismatchError(f"layer {k} expects {W.shape[0]} inputs, "
                                             f"previous layer emits {self.weights[k - 1].shape[1]}")

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def output_dim(self):
        return self.weights[-1].shape[1]

    def arrays(self):
        """Flat parameter list in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @classmethod
    def from_arrays(cls, arrays, activation):
        return cls(list(arrays[0::2]), list(arrays[1::2]), activation)


@dataclass
class ClassifierParams:
    W: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if not np.all(np.isfinite(self.W)):
            raise ValueError("classifier weights contain NaN or Inf")


@dataclass
class _Cache:
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)


def init_mlp(layer_dims, activation="relu", seed=0):
    """He-style uniform fan-in initialization, zero biases.

    ``layer_dims`` lists every width from input to output, e.g. ``[32, 128, 128, 16]``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases, activation)


def init_classifier(num_classes, d, seed=0):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return ClassifierParams(rng.standard_normal((num_classes, d)))


def _act(x, kind):
    return np.maximum(x, 0.0) if kind == "relu" else np.tanh(x)


def _act_grad(pre, grad, kind):
    if kind == "relu":
        return grad * (pre > 0)
    t = np.tanh(pre)
    return grad * (1.0 - t * t)


def mlp_forward(params, inputs):
    """Return ``(outputs, cache)``; the cache feeds :func:`mlp_backward`."""
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != params.input_dim:
        raise DimensionMismatchError(f"input shape {h.shape} does not match input width {params.input_dim}")
    cache = _Cache()
    last = len(params.weights) - 1
    for k, (W, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        a = h @ W + b
        cache.pre.append(a)
        h = a if k == last else _act(a, params.activation)
    return h, cache


def mlp_backward(params, cache, grad_output):
    """Backpropagate ``dL/d(outputs)``.

    Returns ``(grads, grad_input)`` where ``grads`` matches ``params.arrays()``.
    """
    g = np.asarray(grad_output, dtype=np.float64)
    n = len(params.weights)
    if len(cache.inputs) != n or g.shape != cache.pre[-1].shape:
        raise StaleCacheError("cache does not come from a forward pass of these parameters")
    grads = [None] * (2 * n)
    for k in range(n - 1, -1, -1):
        if k != n - 1:
            g = _act_grad(cache.pre[k], g, params.activation)
        W = params.weights[k]
        if cache.inputs[k].shape[1] != W.shape[0]:
            raise StaleCacheError(f"layer {k} cache width {cache.inputs[k].shape[1]} != {W.shape[0]}")
        grads[2 * k] = cache.inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ W.T
    return grads, g


def sgd_step(params, grads, velocity, lr, momentum=0.9, weight_decay=5e-4):
    """Classical momentum SGD with coupled weight decay.

    ``v <- momentum v + (grad + weight_decay param)``, ``param <- param - lr v``.
    ``velocity`` may be None on the first step. Returns new ``(params, velocity)``
    lists; the inputs are not modified.
    """
    if not lr > 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    if weight_decay < 0:
        raise ValueError(f"weight_decay must be >= 0, got {weight_decay}")
    if velocity is None:
        velocity = [np.zeros_like(p) for p in params]
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, velocity):
        v = momentum * v + (g + weight_decay * p)
        new_v.append(v)
        new_p.append(p - lr * v)
    return new_p, new_v


def save_checkpoint(path, mlp, classifier):
    """Write a KMM1 checkpoint.

    Layout (little-endian): magic, u32 layer count, u32 activation code,
    u32 pairs of per-layer dims, f64 weights then f64 bias per layer,
    u32 C, u32 d, f64 classifier rows.
    """
    C, d = classifier.W.shape
    parts = [CHECKPOINT_MAGIC,
             struct.pack("<II", len(mlp.weights), ACTIVATIONS.index(mlp.activation))]
    parts += [struct.pack("<II", *W.shape) for W in mlp.weights]
    for W, b in zip(mlp.weights, mlp.biases):
        parts += [W.astype("<f8").tobytes(), b.astype("<f8").tobytes()]
    parts += [struct.pack("<II", C, d), classifier.W.astype("<f8").tobytes()]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Read a KMM1 checkpoint; raises :class:`FormatError` on any corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"truncated checkpoint (needed {n} bytes)", path, off)
        chunk = blob[off:off + n]
        off += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic, expected {CHECKPOINT_MAGIC.decode()!r}", path, 0)
    n_layers, act = struct.unpack("<II", take(8))
    if act >= len(ACTIVATIONS) or n_layers == 0 or n_layers > 1024:
        raise FormatError("invalid header", path, 4)
    dims = [struct.unpack("<II", take(8)) for _ in range(n_layers)]
    weights, biases = [], []
    for fan_in, fan_out in dims:
        weights.append(np.frombuffer(take(8 * fan_in * fan_out), "<f8").reshape(fan_in, fan_out).copy())
        biases.append(np.frombuffer(take(8 * fan_out), "<f8").copy())
    C, d = struct.unpack("<II", take(8))
    W = np.frombuffer(take(8 * C * d), "<f8").reshape(C, d).copy()
    if off != len(blob):
        raise FormatError("trailing bytes after checkpoint", path, off)
    try:
        mlp = MlpParams(weights, biases, ACTIVATIONS[act])
        clf = ClassifierParams(W)
    except ValueError as exc:
        raise FormatError(f"inconsistent checkpoint: {exc}", path) from exc
    if mlp.output_dim != d:
        raise FormatError(f"embedding width {mlp.output_dim} != classifier width {d}", path)
    return mlp, clf
