import math

import numpy as np
import pytest

import kappaface.trainer as trainer_mod
from kappaface.class_stats import MemoryBuffer
from kappaface.errors import ConfigError, NumericalAbort
from kappaface.evaluation import evaluate_pairs
from kappaface.losses import MarginLossConfig
from kappaface.synth import SyntheticSpec, generate, make_pairs
from kappaface.trainer import (TrainConfig, embed, lr_at, read_records_csv, train, with_family,
                               write_records_csv)


def toy(num_classes=4, n=40, kappa=200.0, seed=0, input_dim=8):
    return generate(SyntheticSpec(num_classes, input_dim, n, n, 0.0, kappa, kappa, seed=seed))


def quick(family="kappaface", **kw):
    base = dict(loss=MarginLossConfig(family, 16.0, 0.5 if family != "norm_softmax" else 0.0),
                epochs=3, lr_decay_epochs=(2,), batch_size=32, hidden=(16,), embed_dim=4)
    base.update(kw)
    return TrainConfig(**base)


class TestLrSchedule:
    cfg = TrainConfig(epochs=40, lr=0.1, lr_decay_epochs=(20, 28, 32), lr_decay_factor=0.1)

    @pytest.mark.parametrize("epoch, expected", [(0, 0.1), (19, 0.1), (20, 0.01), (30, 0.001), (33, 0.0001)])
    def test_examples(self, epoch, expected):
        assert lr_at(epoch, self.cfg) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("kw", [dict(epochs=0), dict(batch_size=0), dict(lr_decay_epochs=(5, 5)),
                                    dict(epochs=10, lr_decay_epochs=(10,)), dict(alpha=1.0),
                                    dict(psi_fixed=1.5), dict(temperature=0.0)])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_psi_fixed_needs_kappaface(self):
        with pytest.raises(ConfigError):
            TrainConfig(loss=MarginLossConfig("arcface"), psi_fixed=1.0)

    def test_default_scale(self):
        assert TrainConfig().loss.scale == 16.0


def test_smoke_single_batch():
    ds = toy()
    res = train(ds, quick(epochs=1, lr_decay_epochs=(), batch_size=len(ds)))
    assert len(res.records) == 1
    assert math.isfinite(res.records[0].mean_loss) and res.records[0].mean_loss >= 0


def test_norm_softmax_has_no_psi():
    res = train(toy(), quick("norm_softmax"))
    assert res.buffer is None and res.weights is None
    assert all(r.psi_min is None and r.kappa_mean is None for r in res.records)


@pytest.mark.parametrize("family", ["plain_softmax", "cosface", "arcface"])
def test_other_families_run(family):
    res = train(toy(), quick(family, loss=MarginLossConfig(family, 16.0, 0.2)))
    assert all(math.isfinite(r.mean_loss) for r in res.records)


def test_two_class_convergence():
    ds = generate(SyntheticSpec(2, 8, 100, 100, 0.0, 50, 50, seed=1))
    cfg = TrainConfig(epochs=30, lr_decay_epochs=(20,), batch_size=32, hidden=(32,), embed_dim=4, seed=1)
    res = train(ds, cfg)
    assert res.records[-1].mean_loss < 0.1
    pairs = make_pairs(ds, 500, 500, 0)
    assert evaluate_pairs(embed(res.mlp, ds.inputs), pairs).accuracy > 0.95


def test_reproducible():
    ds = toy()
    a, b = train(ds, quick()), train(ds, quick())
    assert a.records == b.records
    for x, y in zip(a.mlp.arrays() + [a.classifier.W], b.mlp.arrays() + [b.classifier.W]):
        np.testing.assert_array_equal(x, y)


def test_arcface_equals_kappaface_psi_one():
    ds = generate(SyntheticSpec(6, 8, 5, 60, 1.0, 10, 300, seed=2))
    cfg = quick(epochs=4, lr_decay_epochs=(3,))
    arc = train(ds, with_family(cfg, "arcface"))
    kap = train(ds, TrainConfig(**{**cfg.__dict__, "psi_fixed": 1.0}))
    assert len(arc.records) == len(kap.records)
    for r1, r2 in zip(arc.records, kap.records):
        assert abs(r1.mean_loss - r2.mean_loss) <= 1e-10
        assert abs(r1.kappa_mean - r2.kappa_mean) <= 1e-10
    for x, y in zip(arc.mlp.arrays(), kap.mlp.arrays()):
        assert np.max(np.abs(x - y)) <= 1e-10


def test_buffer_coverage(monkeypatch):
    seen = []
    original = MemoryBuffer.update_batch

    def spy(self, indices, z):
        seen.append(np.asarray(indices).copy())
        return original(self, indices, z)

    monkeypatch.setattr(MemoryBuffer, "update_batch", spy)
    ds = toy()
    train(ds, quick(epochs=1, lr_decay_epochs=(), batch_size=23))
    counts = np.bincount(np.concatenate(seen), minlength=len(ds))
    np.testing.assert_array_equal(counts, 1)


def test_psi_snapshot_stable_within_epoch(monkeypatch):
    used = []
    original = trainer_mod.forward

    def spy(Z, W, labels, psi, config):
        used.append(psi)
        return original(Z, W, labels, psi, config)

    monkeypatch.setattr(trainer_mod, "forward", spy)
    ds = toy(n=50)
    cfg = quick(epochs=3, batch_size=16)
    res = train(ds, cfg)
    per_epoch = math.ceil(len(ds) / 16)
    assert len(used) == 3 * per_epoch
    for e in range(3):
        chunk = used[e * per_epoch:(e + 1) * per_epoch]
        assert all(p is chunk[0] for p in chunk)
        assert chunk[0] is res.weights_history[e].psi
    assert len(res.weights_history) == 4


def test_low_kappa_class_gets_larger_psi():
    spec_hi = SyntheticSpec(2, 16, 150, 150, 0.0, 1000, 1000, seed=5)
    spec_lo = SyntheticSpec(2, 16, 150, 150, 0.0, 5, 5, seed=6)
    hi, lo = generate(spec_hi), generate(spec_lo)
    # class 0 tight, class 1 diffuse, equal populations
    from kappaface.synth import SyntheticDataset
    inputs = np.concatenate([hi.inputs[hi.labels == 0], lo.inputs[lo.labels == 1]])
    labels = np.repeat([0, 1], 150)
    ds = SyntheticDataset(inputs, labels, np.stack([hi.prototypes[0], lo.prototypes[1]]),
                          np.array([1000.0, 5.0]), np.array([150, 150]))
    res = train(ds, TrainConfig(epochs=2, lr_decay_epochs=(), hidden=(32,), embed_dim=8, seed=0))
    w = res.weights_history[1]
    assert w.kappa_hat[0] > w.kappa_hat[1]
    assert w.psi[1] > w.psi[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_abort():
    ds = toy()
    cfg = quick("plain_softmax", loss=MarginLossConfig("plain_softmax", 1.0, 0.0), lr=1e30, momentum=0.0,
                epochs=3, lr_decay_epochs=())
    with pytest.raises(NumericalAbort) as info:
        train(ds, cfg)
    assert info.value.last_good is not None


def test_eval_columns_and_csv(tmp_path):
    ds = toy()
    pairs = make_pairs(ds, 50, 100, 0)
    res = train(ds, quick(eval_every=1, eval_far=0.1), eval_set=(ds, pairs))
    assert all(r.eval_acc is not None and r.eval_tar is not None for r in res.records)
    path = tmp_path / "m.csv"
    write_records_csv(res.records, path, "generated now")
    lines = path.read_text().splitlines()
    assert lines[0] == "# generated now"
    assert lines[1] == "epoch,lr,mean_loss,psi_min,psi_mean,psi_max,kappa_mean,kappa_std,eval_acc,eval_tar"
    assert read_records_csv(path) == res.records


def test_csv_without_eval(tmp_path):
    res = train(toy(), quick("norm_softmax"))
    path = tmp_path / "m.csv"
    write_records_csv(res.records, path)
    assert path.read_text().splitlines()[0] == "epoch,lr,mean_loss,psi_min,psi_mean,psi_max,kappa_mean,kappa_std"
    assert read_records_csv(path) == res.records
