"""Minibatch training loop with EMA memory and per-epoch margin refresh.

Per batch: embed, l2-normalize embeddings and class weights, update the
memory buffer, evaluate the loss with the current epoch's psi snapshot,
and take one SGD step on both the network and the classifier. At the end
of every epoch the buffer's class concentrations are recomputed and, for
``kappaface``, a fresh psi snapshot is built for the next epoch.
"""

from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np

from .class_stats import init_buffer
from .errors import ConfigError, ConfigMismatchError, NumericalAbort
from .evaluation import evaluate_pairs
from .losses import MarginLossConfig, backward, forward
from .model import ClassifierParams, MlpParams, init_classifier, init_mlp, mlp_forward, mlp_backward, sgd_step
from .scheduler import ClassWeights, SchedulerConfig, compute_psi, initial_weights
from .sphere import normalize_rows

__all__ = ["TrainConfig", "EpochRecord", "TrainResult", "lr_at", "train", "embed",
           "write_records_csv", "RECORD_FIELDS"]

RECORD_FIELDS = ["epoch", "lr", "mean_loss", "psi_min", "psi_mean", "psi_max", "kappa_mean", "kappa_std"]
EVAL_FIELDS = ["eval_acc", "eval_tar"]
_BUFFER_FAMILIES = ("arcface", "cosface", "kappaface")


@dataclass(frozen=True)
class TrainConfig:
    loss: MarginLossConfig = field(default_factory=lambda: MarginLossConfig(scale=16.0))
    temperature: float = 0.55
    gamma: float = 0.5
    psi_fixed: float = None
    use_population_weight: bool = True
    batch_size: int = 64
    epochs: int = 40
    lr: float = 0.1
    lr_decay_epochs: tuple = (20, 30)
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    alpha: float = 0.3
    seed: int = 0
    eval_every: int = 0
    eval_far: float = 1e-2
    hidden: tuple = (128, 128)
    embed_dim: int = 16
    activation: str = "relu"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        decay = tuple(int(e) for e in self.lr_decay_epochs)
        if any(b <= a for a, b in zip(decay, decay[1:])):
            raise ConfigError(f"lr_decay_epochs must be strictly increasing, got {decay}")
        if decay and (decay[0] < 0 or decay[-1] >= self.epochs):
            raise ConfigError(f"lr_decay_epochs must lie in [0, epochs), got {decay}")
        object.__setattr__(self, "lr_decay_epochs", decay)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.psi_fixed is not None:
            if self.loss.family != "kappaface":
                raise ConfigError("psi_fixed only applies to the kappaface loss")
            if not 0.0 <= self.psi_fixed <= 1.0:
                raise ConfigError(f"psi_fixed must lie in [0, 1], got {self.psi_fixed}")
        if self.loss.family == "kappaface":
            # validates temperature / gamma / m0 up front
            SchedulerConfig(self.temperature, self.gamma, self.loss.m0, 1)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    mean_loss: float
    psi_min: float = None
    psi_mean: float = None
    psi_max: float = None
    kappa_mean: float = None
    kappa_std: float = None
    eval_acc: float = None
    eval_tar: float = None


@dataclass
class TrainResult:
    mlp: MlpParams
    classifier: ClassifierParams
    records: list
    buffer: object = None
    weights: ClassWeights = None
    weights_history: list = field(default_factory=list)


def lr_at(epoch, config):
    """Step-decayed learning rate for a 0-based epoch."""
    n = sum(1 for e in config.lr_decay_epochs if e <= epoch)
    return config.lr * config.lr_decay_factor ** n


def embed(mlp, inputs):
    """Unit embeddings of ``inputs``."""
    out, _ = mlp_forward(mlp, inputs)
    return normalize_rows(out)[0]


def _fixed_weights(value, C, epoch):
    full = np.full(C, float(value))
    return ClassWeights(np.zeros(C), np.full(C, 0.5), np.zeros(C), full, epoch)


def train(dataset, config, eval_set=None):
    """Train an embedding network and classifier on ``dataset``.

    Parameters
    ----------
    dataset : SyntheticDataset
    config : TrainConfig
    eval_set : optional ``(SyntheticDataset, pairs)`` evaluated every
        ``config.eval_every`` epochs.

    Raises
    ------
    NumericalAbort
        On a non-finite loss. ``last_good`` holds the parameters at the end of
        the previous epoch.
    """
    loss_cfg = config.loss
    family = loss_cfg.family
    X = np.asarray(dataset.inputs, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.int64)
    pops = np.asarray(dataset.populations)
    C = dataset.num_classes
    if y.max() >= C:
        raise ConfigMismatchError(f"labels exceed the dataset's {C} classes")
    N = X.shape[0]

    model_ss, clf_ss, buf_ss, order_ss = np.random.SeedSequence(config.seed).spawn(4)
    mlp = init_mlp([X.shape[1], *config.hidden, config.embed_dim], config.activation, np.random.default_rng(model_ss))
    clf = init_classifier(C, config.embed_dim, np.random.default_rng(clf_ss))
    order_rng = np.random.default_rng(order_ss)
    buffer = None
    if family in _BUFFER_FAMILIES:
        buffer = init_buffer(y, config.embed_dim, config.alpha, np.random.default_rng(buf_ss), C)

    weights = None
    sched = None
    if family == "kappaface":
        sched = SchedulerConfig(config.temperature, config.gamma, loss_cfg.m0, int(pops.max()))
        if config.psi_fixed is not None:
            weights = _fixed_weights(config.psi_fixed, C, 0)
        else:
            weights = initial_weights(pops, sched, config.use_population_weight)
    history = [weights] if weights is not None else []

    params = mlp.arrays() + [clf.W]
    velocity = None
    records = []
    last_good = (mlp, clf)
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        psi = None if weights is None else weights.psi
        perm = order_rng.permutation(N)
        total = 0.0
        for start in range(0, N, config.batch_size):
            idx = perm[start:start + config.batch_size]
            mlp = MlpParams.from_arrays(params[:-1], config.activation)
            W = params[-1]
            out, cache = mlp_forward(mlp, X[idx])
            if loss_cfg.angular:
                Zu, _ = normalize_rows(out)
                Wu, _ = normalize_rows(W)
            else:
                Zu, Wu = out, W
            if buffer is not None:
                buffer.update_batch(idx, Zu)
            result = forward(Zu, Wu, y[idx], psi, loss_cfg)
            if not math.isfinite(result.loss):
                raise NumericalAbort(f"non-finite loss at epoch {epoch}, batch starting {start}",
                                     records, last_good)
            total += result.loss * idx.size
            gZ, gW = backward(result, out, W, y[idx], psi, loss_cfg)
            grads, _ = mlp_backward(mlp, cache, gZ)
            params, velocity = sgd_step(params, grads + [gW], velocity, lr,
                                        config.momentum, config.weight_decay)

        if not all(np.all(np.isfinite(p)) for p in params):
            raise NumericalAbort(f"non-finite parameters after epoch {epoch}", records, last_good)
        mlp = MlpParams.from_arrays(params[:-1], config.activation)
        clf = ClassifierParams(params[-1])
        rec = EpochRecord(epoch, lr, total / N)
        if weights is not None:
            rec.psi_min, rec.psi_mean, rec.psi_max = (float(weights.psi.min()), float(weights.psi.mean()),
                                                      float(weights.psi.max()))
        if buffer is not None:
            buffer.refresh_sums()
            conc = buffer.epoch_concentrations()
            rec.kappa_mean = float(conc.kappa_hat.mean())
            rec.kappa_std = float(conc.kappa_hat.std())
            if family == "kappaface":
                if config.psi_fixed is not None:
                    weights = _fixed_weights(config.psi_fixed, C, epoch + 1)
                else:
                    weights = compute_psi(conc.kappa_hat, pops, sched, epoch + 1, config.use_population_weight)
                history.append(weights)
        if eval_set is not None and config.eval_every and (epoch + 1) % config.eval_every == 0:
            eval_data, pairs = eval_set
            report = evaluate_pairs(embed(mlp, eval_data.inputs), pairs, (config.eval_far,))
            rec.eval_acc = report.accuracy
            rec.eval_tar = report.tar_at_far.get(config.eval_far)
        records.append(rec)
        last_good = (mlp, clf)

    return TrainResult(mlp, clf, records, buffer, weights, history)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_records_csv(records, path, header_comment=None):
    """Write the per-epoch CSV; eval columns appear when any record has them."""
    with_eval = any(r.eval_acc is not None for r in records)
    fields = RECORD_FIELDS + (EVAL_FIELDS if with_eval else [])
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in records:
            w.writerow([_fmt(getattr(r, f)) for f in fields])


def read_records_csv(path):
    """Inverse of :func:`write_records_csv` (comment lines skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        kw = {k: (None if v == "" else (int(v) if k == "epoch" else float(v))) for k, v in row.items()}
        out.append(EpochRecord(**kw))
    return out


def with_family(config, family, **loss_overrides):
    """Copy of ``config`` using another loss family (ablation helper)."""
    loss = replace(config.loss, family=family, **loss_overrides)
    kw = {"loss": loss}
    if family != "kappaface":
        kw["psi_fixed"] = None
    return replace(config, **kw)
