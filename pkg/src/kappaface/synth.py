"""Synthetic imbalanced datasets of vMF clusters on the input sphere.

Class ``c`` (0-based) has rank ``c + 1`` under a power law, so class 0 is the
most populated. Prototypes are uniform on S^{D_in - 1}; concentrations are
log-uniform. A chosen subset of classes is contaminated with uniform noise.
"""

from dataclasses import dataclass
import itertools
import struct

import numpy as np

from .errors import FormatError, InsufficientPairsError, SpecInvalidError
from .sphere import VmfParams, sample_uniform_sphere, sample_vmf

__all__ = [
    "SyntheticSpec",
    "SyntheticDataset",
    "power_law_populations",
    "generate",
    "split_holdout",
    "make_pairs",
    "write_dataset",
    "read_dataset",
    "write_pairs",
    "read_pairs",
    "DATASET_MAGIC",
]

DATASET_MAGIC = b"KFD1"


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 100
    input_dim: int = 32
    min_n: int = 5
    max_n: int = 500
    power_exponent: float = 1.0
    kappa_min: float = 10.0
    kappa_max: float = 300.0
    noise_mix: float = 0.0
    noisy_class_fraction: float = 1.0
    seed: int = 0

    def validate(self):
        problems = []
        if self.num_classes < 2:
            problems.append(f"num_classes must be >= 2 (got {self.num_classes})")
        if self.input_dim < 2:
            problems.append(f"input_dim must be >= 2 (got {self.input_dim})")
        if self.min_n < 2:
            problems.append(f"min_n must be >= 2 (got {self.min_n})")
        if self.max_n < self.min_n:
            problems.append(f"max_n must be >= min_n (got {self.max_n} < {self.min_n})")
        if self.power_exponent < 0:
            problems.append(f"power_exponent must be >= 0 (got {self.power_exponent})")
        if not self.kappa_min > 0:
            problems.append(f"kappa_min must be > 0 (got {self.kappa_min})")
        if self.kappa_max < self.kappa_min:
            problems.append(f"kappa_max must be >= kappa_min (got {self.kappa_max} < {self.kappa_min})")
        if not 0.0 <= self.noise_mix < 1.0:
            problems.append(f"noise_mix must lie in [0, 1) (got {self.noise_mix})")
        if not 0.0 <= self.noisy_class_fraction <= 1.0:
            problems.append(f"noisy_class_fraction must lie in [0, 1] (got {self.noisy_class_fraction})")
        if problems:
            raise SpecInvalidError("; ".join(problems))
        return self


@dataclass
class SyntheticDataset:
    inputs: np.ndarray
    labels: np.ndarray
    prototypes: np.ndarray
    true_kappas: np.ndarray
    populations: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.populations = np.asarray(self.populations, dtype=np.int64)
        counts = np.bincount(self.labels, minlength=self.num_classes)
        if counts.shape[0] != self.num_classes or not np.array_equal(counts, self.populations):
            raise ValueError("populations disagree with labels")
        if np.any(self.populations == 0):
            raise ValueError("every class needs at least one sample")

    @property
    def num_classes(self):
        return self.prototypes.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        labels = self.labels[indices]
        return SyntheticDataset(self.inputs[indices], labels, self.prototypes, self.true_kappas,
                                np.bincount(labels, minlength=self.num_classes))


def _f32(x):
    # values that survive the float32 file format unchanged
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def power_law_populations(num_classes, min_n, max_n, exponent):
    """``n_c = clip(round(max_n * (c + 1)^-exponent), min_n, max_n)``."""
    rank = np.arange(1, num_classes + 1, dtype=np.float64)
    return np.clip(np.rint(max_n * rank ** (-exponent)), min_n, max_n).astype(np.int64)


def generate(spec):
    spec.validate()
    ss = np.random.SeedSequence(spec.seed)
    meta_ss, class_ss = ss.spawn(2)
    rng = np.random.default_rng(meta_ss)
    C, D = spec.num_classes, spec.input_dim
    prototypes = sample_uniform_sphere(C, D, rng)
    kappas = np.exp(rng.uniform(np.log(spec.kappa_min), np.log(spec.kappa_max), size=C))
    populations = power_law_populations(C, spec.min_n, spec.max_n, spec.power_exponent)
    n_noisy = int(round(spec.noisy_class_fraction * C))
    noisy = np.zeros(C, dtype=bool)
    noisy[rng.choice(C, size=n_noisy, replace=False)] = True

    inputs, labels = [], []
    for c, child in enumerate(class_ss.spawn(C)):
        crng = np.random.default_rng(child)
        n_c = int(populations[c])
        n_noise = int(round(spec.noise_mix * n_c)) if noisy[c] else 0
        n_noise = min(n_noise, n_c - 1)
        x = sample_vmf(VmfParams(prototypes[c], float(kappas[c])), n_c, crng)
        if n_noise:
            x[n_c - n_noise:] = sample_uniform_sphere(n_noise, D, crng)
        inputs.append(x)
        labels.append(np.full(n_c, c))
    return SyntheticDataset(_f32(np.concatenate(inputs)), np.concatenate(labels),
                            _f32(prototypes), _f32(kappas), populations)


def split_holdout(dataset, fraction, seed):
    """Seeded per-class holdout split; returns ``(train, holdout)`` datasets.

    Each class sends ``round(fraction * n_c)`` samples to the holdout, clipped
    to ``[1, n_c - 1]`` so both parts keep every class.
    """
    if not 0.0 < fraction < 1.0:
        raise SpecInvalidError(f"holdout fraction must lie in (0, 1), got {fraction}")
    if np.any(dataset.populations < 2):
        raise SpecInvalidError("every class needs >= 2 samples to split")
    rng = np.random.default_rng(seed)
    train_idx, hold_idx = [], []
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        idx = idx[rng.permutation(idx.size)]
        k = int(np.clip(round(fraction * idx.size), 1, idx.size - 1))
        hold_idx.append(np.sort(idx[:k]))
        train_idx.append(np.sort(idx[k:]))
    return dataset.subset(np.concatenate(train_idx)), dataset.subset(np.concatenate(hold_idx))


def _class_pairs(idx, rng):
    a, b = np.triu_indices(idx.size, k=1)
    order = rng.permutation(a.size)
    return np.stack([idx[a[order]], idx[b[order]]], axis=1)


def _balanced_positives(labels, counts, num_pos, rng):
    # class drawn uniformly among those with unused pairs, then its next pair
    members = {int(c): np.flatnonzero(labels == c) for c in np.flatnonzero(counts >= 2)}
    pools, used = {}, {}
    live = sorted(members)
    out = []
    while len(out) < num_pos:
        c = live[int(rng.integers(len(live)))]
        if c not in pools:
            pools[c] = _class_pairs(members[c], rng)
            used[c] = 0
        out.append(pools[c][used[c]])
        used[c] += 1
        if used[c] == pools[c].shape[0]:
            live.remove(c)
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def _uniform_positives(labels, counts, num_pos, rng):
    blocks = [_class_pairs(np.flatnonzero(labels == c), rng) for c in np.flatnonzero(counts >= 2)]
    allpos = np.concatenate(blocks)
    return allpos[rng.choice(allpos.shape[0], size=num_pos, replace=False)]


def make_pairs(dataset, num_pos, num_neg, seed, strategy="balanced"):
    """Sample distinct unordered verification pairs.

    ``strategy="balanced"`` draws the class (or, for negatives, the two
    classes) uniformly before drawing samples, so large classes do not
    dominate the protocol. ``"uniform"`` samples uniformly over all
    same-class / cross-class pairs.

    Returns an ``(num_pos + num_neg, 3)`` int array of ``(i, j, same)`` with
    ``i < j``; positives first.
    """
    if strategy not in ("balanced", "uniform"):
        raise ValueError(f"unknown pair strategy {strategy!r}")
    labels = dataset.labels if hasattr(dataset, "labels") else np.asarray(dataset)
    rng = np.random.default_rng(seed)
    N = labels.shape[0]
    counts = np.bincount(labels)
    total_pos = int(np.sum(counts * (counts - 1) // 2))
    total_neg = N * (N - 1) // 2 - total_pos
    if num_pos > total_pos or num_neg > total_neg:
        raise InsufficientPairsError(f"requested {num_pos} positive / {num_neg} negative pairs, "
                                     f"only {total_pos} / {total_neg} exist")

    pos = np.empty((0, 2), dtype=np.int64)
    if num_pos:
        sampler = _balanced_positives if strategy == "balanced" else _uniform_positives
        pos = np.sort(sampler(labels, counts, num_pos, rng), axis=1)

    neg = []
    seen = set()
    if num_neg > total_neg // 2:
        allneg = np.array([(i, j) for i, j in itertools.combinations(range(N), 2)
                           if labels[i] != labels[j]], dtype=np.int64)
        neg = allneg[rng.choice(allneg.shape[0], size=num_neg, replace=False)].tolist()
    else:
        present = np.flatnonzero(counts > 0)
        members = [np.flatnonzero(labels == c) for c in range(counts.shape[0])]
        while len(neg) < num_neg:
            if strategy == "balanced":
                c1, c2 = rng.choice(present, size=2, replace=False)
                i = int(members[c1][rng.integers(counts[c1])])
                j = int(members[c2][rng.integers(counts[c2])])
            else:
                i, j = (int(v) for v in rng.integers(0, N, size=2))
            i, j = min(i, j), max(i, j)
            if labels[i] == labels[j] or (i, j) in seen:
                continue
            seen.add((i, j))
            neg.append((i, j))
    neg = np.asarray(neg, dtype=np.int64).reshape(-1, 2)

    out = np.zeros((num_pos + num_neg, 3), dtype=np.int64)
    out[:num_pos, :2] = pos
    out[:num_pos, 2] = 1
    out[num_pos:, :2] = neg
    return out


def write_dataset(dataset, path):
    """Write the KFD1 binary format (little-endian, float32 reals)."""
    N, D = dataset.inputs.shape
    C = dataset.num_classes
    parts = [DATASET_MAGIC, struct.pack("<III", N, D, C),
             dataset.inputs.astype("<f4").tobytes(),
             dataset.labels.astype("<u4").tobytes(),
             dataset.prototypes.astype("<f4").tobytes(),
             dataset.true_kappas.astype("<f4").tobytes(),
             dataset.populations.astype("<u4").tobytes()]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_dataset(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != DATASET_MAGIC:
        raise FormatError(f"bad magic, expected {DATASET_MAGIC.decode()!r}", path, 0)
    if len(blob) < 16:
        raise FormatError("truncated header", path, len(blob))
    N, D, C = struct.unpack_from("<III", blob, 4)
    sizes = [("inputs", "<f4", N * D), ("labels", "<u4", N), ("prototypes", "<f4", C * D),
             ("true_kappas", "<f4", C), ("populations", "<u4", C)]
    off = 16
    arrays = {}
    for name, dt, count in sizes:
        if off + 4 * count > len(blob):
            raise FormatError(f"truncated while reading {name}", path, len(blob))
        arrays[name] = np.frombuffer(blob, dt, count, off)
        off += 4 * count
    if off != len(blob):
        raise FormatError("trailing bytes after dataset", path, off)
    try:
        return SyntheticDataset(arrays["inputs"].astype(np.float64).reshape(N, D),
                                arrays["labels"].astype(np.int64),
                                arrays["prototypes"].astype(np.float64).reshape(C, D),
                                arrays["true_kappas"].astype(np.float64),
                                arrays["populations"].astype(np.int64))
    except ValueError as exc:
        raise FormatError(f"inconsistent dataset: {exc}", path) from exc


def write_pairs(pairs, path):
    with open(path, "w") as fh:
        for i, j, same in pairs:
            fh.write(f"{i}\t{j}\t{same}\n")


def read_pairs(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 3 or fields[2] not in ("0", "1"):
                raise FormatError(f"line {lineno}: expected i<TAB>j<TAB>0|1", path)
            try:
                rows.append((int(fields[0]), int(fields[1]), int(fields[2])))
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}", path) from exc
    return np.asarray(rows, dtype=np.int64).reshape(-1, 3)
