"""Per-sample EMA memory of unit embeddings and per-class concentration.

The buffer keeps one unit row per training sample together with running
per-class sums of those rows, so class resultant lengths (and hence vMF
concentrations) can be read off in O(C d) at the end of every epoch.
"""

from dataclasses import dataclass
import struct

import numpy as np

from .errors import EmptyClassError, FormatError
from .sphere import NORM_EPS, estimate_kappa, sample_uniform_sphere

__all__ = ["ClassConcentrations", "MemoryBuffer", "init_buffer", "BUFFER_MAGIC"]

BUFFER_MAGIC = b"KMB1"


@dataclass(frozen=True)
class ClassConcentrations:
    kappa_hat: np.ndarray
    r_hat: np.ndarray


class MemoryBuffer:
    """EMA memory of l2-normalized embeddings, one row per training sample.

    Parameters
    ----------
    vectors : (N, d) array of unit rows
    labels : (N,) integer class ids in ``[0, C)``
    alpha : EMA momentum; weight on the *old* row.
    num_classes : C; inferred from ``labels`` when omitted.
    """

    def __init__(self, vectors, labels, alpha, num_classes=None):
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        self.vectors = np.array(vectors, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64).copy()
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.labels.shape[0]:
            raise ValueError("vectors must be N x d with one label per row")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        C = int(self.labels.max()) + 1 if num_classes is None else int(num_classes)
        counts = np.bincount(self.labels, minlength=C)
        if counts.shape[0] > C:
            raise ValueError(f"label {counts.shape[0] - 1} outside [0, {C})")
        if np.any(counts == 0):
            raise EmptyClassError(f"classes without samples: {np.flatnonzero(counts == 0).tolist()}")
        self.alpha = float(alpha)
        self.class_counts = counts
        self.class_sums = np.zeros((C, self.vectors.shape[1]))
        self.refresh_sums()

    @property
    def num_classes(self):
        return self.class_counts.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    def refresh_sums(self):
        """Recompute the class sums exactly from the stored rows."""
        order = np.argsort(self.labels, kind="stable")
        groups = np.split(order, np.cumsum(self.class_counts)[:-1])
        self.class_sums = np.stack([self.vectors[g].sum(axis=0) for g in groups])

    def update_sample(self, i, z):
        """EMA-update row ``i`` towards unit embedding ``z``.

        The new row is ``normalize(alpha * old + (1 - alpha) * z)``. If the
        combination cancels (norm <= 1e-12) the old row is kept and False is
        returned.
        """
        if not 0 <= i < len(self):
            raise IndexError(f"sample index {i} out of range for buffer of size {len(self)}")
        z = np.asarray(z, dtype=np.float64)
        old = self.vectors[i]
        new = self.alpha * old + (1.0 - self.alpha) * z
        n = np.linalg.norm(new)
        if not n > NORM_EPS:
            return False
        new = new / n
        self.class_sums[self.labels[i]] += new - old
        self.vectors[i] = new
        return True

    def update_batch(self, indices, z):
        """Vectorized :meth:`update_sample` for distinct ``indices``."""
        indices = np.asarray(indices, dtype=np.int64)
        if np.unique(indices).size != indices.size:
            raise ValueError("batch indices must be distinct")
        if indices.size and (indices.min() < 0 or indices.max() >= len(self)):
            raise IndexError("sample index out of range")
        old = self.vectors[indices]
        new = self.alpha * old + (1.0 - self.alpha) * np.asarray(z, dtype=np.float64)
        n = np.linalg.norm(new, axis=1)
        keep = n > NORM_EPS
        new[keep] /= n[keep, None]
        new[~keep] = old[~keep]
        np.add.at(self.class_sums, self.labels[indices], new - old)
        self.vectors[indices] = new
        return keep

    def epoch_concentrations(self):
        """Per-class resultant length and concentration from the running sums."""
        # per-row norm, same rounding as resultant_length
        r_hat = np.array([np.linalg.norm(s) for s in self.class_sums]) / self.class_counts
        r_hat = np.clip(r_hat, 0.0, 1.0)
        return ClassConcentrations(kappa_hat=estimate_kappa(r_hat, self.dim), r_hat=r_hat)

    def dump(self, path):
        """Write a KMB1 snapshot (rows stored as float32)."""
        N, d = self.vectors.shape
        with open(path, "wb") as fh:
            fh.write(BUFFER_MAGIC)
            fh.write(struct.pack("<III", N, d, self.num_classes))
            fh.write(self.vectors.astype("<f4").tobytes())
            fh.write(self.labels.astype("<u4").tobytes())

    @classmethod
    def load(cls, path, alpha=0.0):
        """Read a KMB1 snapshot. Rows are renormalized after the float32 round trip."""
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:4] != BUFFER_MAGIC:
            raise FormatError(f"bad magic, expected {BUFFER_MAGIC.decode()!r}", path, 0)
        if len(blob) < 16:
            raise FormatError("truncated header", path, len(blob))
        N, d, C = struct.unpack_from("<III", blob, 4)
        expected = 16 + 4 * N * d + 4 * N
        if len(blob) != expected:
            raise FormatError(f"expected {expected} bytes, found {len(blob)}", path, min(len(blob), expected))
        rows = np.frombuffer(blob, "<f4", N * d, 16).astype(np.float64).reshape(N, d)
        labels = np.frombuffer(blob, "<u4", N, 16 + 4 * N * d).astype(np.int64)
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        return cls(rows, labels, alpha, num_classes=C)


def init_buffer(labels, d, alpha, seed, num_classes=None):
    """Buffer of i.i.d. uniform unit rows, one per label."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return MemoryBuffer(sample_uniform_sphere(labels.shape[0], d, rng), labels, alpha, num_classes)
