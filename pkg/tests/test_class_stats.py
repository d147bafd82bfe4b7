import numpy as np
import pytest

from kappaface.class_stats import MemoryBuffer, init_buffer
from kappaface.errors import EmptyClassError, FormatError
from kappaface.sphere import KAPPA_CAP, estimate_kappa, resultant_length, sample_uniform_sphere


def eye(d, k):
    e = np.zeros(d)
    e[k] = 1.0
    return e


def random_buffer(N, C, d, alpha, seed):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(C), rng.integers(0, C, N - C)])
    return init_buffer(labels, d, alpha, seed, num_classes=C), rng


class TestInit:
    def test_counts(self):
        buf = init_buffer([0, 0, 1], 4, 0.3, seed=0)
        np.testing.assert_array_equal(buf.class_counts, [2, 1])

    def test_unit_rows(self):
        buf = init_buffer(np.arange(100) % 7, 16, 0.3, seed=1)
        np.testing.assert_allclose(np.linalg.norm(buf.vectors, axis=1), 1.0, atol=1e-9)

    def test_deterministic(self):
        a = init_buffer(np.arange(50) % 5, 8, 0.3, seed=3)
        b = init_buffer(np.arange(50) % 5, 8, 0.3, seed=3)
        np.testing.assert_array_equal(a.vectors, b.vectors)

    def test_empty_class(self):
        with pytest.raises(EmptyClassError):
            init_buffer([0, 2, 2], 4, 0.3, seed=0)
        with pytest.raises(EmptyClassError):
            init_buffer([0, 1], 4, 0.3, seed=0, num_classes=3)

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            init_buffer([0, 1], 4, 1.0, seed=0)


class TestUpdate:
    @pytest.mark.parametrize("alpha, z, expected", [
        (0.0, eye(4, 1), eye(4, 1)),
        (0.3, eye(4, 1), np.array([0.3, 0.7, 0.0, 0.0]) / np.hypot(0.3, 0.7)),
        (0.3, -eye(4, 0), -eye(4, 0)),
    ])
    def test_examples(self, alpha, z, expected):
        buf = MemoryBuffer([eye(4, 0)], [0], alpha)
        assert buf.update_sample(0, z)
        np.testing.assert_allclose(buf.vectors[0], expected, atol=1e-15)
        np.testing.assert_allclose(buf.class_sums[0], expected, atol=1e-15)

    def test_hand_value(self):
        buf = MemoryBuffer([eye(4, 0)], [0], 0.3)
        buf.update_sample(0, eye(4, 1))
        np.testing.assert_allclose(buf.vectors[0, :2], [0.3939193, 0.9191450], atol=1e-7)

    def test_cancellation_keeps_old_row(self):
        buf = MemoryBuffer([eye(3, 0)], [0], 0.5)
        assert buf.update_sample(0, -eye(3, 0)) is False
        np.testing.assert_array_equal(buf.vectors[0], eye(3, 0))

    def test_index_error(self):
        buf = MemoryBuffer([eye(3, 0)], [0], 0.5)
        with pytest.raises(IndexError):
            buf.update_sample(1, eye(3, 0))

    def test_touches_one_row(self):
        buf, rng = random_buffer(200, 10, 8, 0.3, 4)
        rows, sums = buf.vectors.copy(), buf.class_sums.copy()
        i = 37
        buf.update_sample(i, sample_uniform_sphere(1, 8, rng)[0])
        changed = np.flatnonzero(np.any(buf.vectors != rows, axis=1))
        np.testing.assert_array_equal(changed, [i])
        changed = np.flatnonzero(np.any(buf.class_sums != sums, axis=1))
        np.testing.assert_array_equal(changed, [buf.labels[i]])

    def test_batch_equals_sequential(self):
        a, rng = random_buffer(300, 12, 6, 0.3, 5)
        b, _ = random_buffer(300, 12, 6, 0.3, 5)
        idx = rng.permutation(300)[:64]
        z = sample_uniform_sphere(64, 6, rng)
        a.update_batch(idx, z)
        for i, zi in zip(idx, z):
            b.update_sample(i, zi)
        np.testing.assert_allclose(a.vectors, b.vectors, atol=1e-15)
        np.testing.assert_allclose(a.class_sums, b.class_sums, atol=1e-12)

    def test_batch_rejects_duplicates(self):
        buf, _ = random_buffer(20, 2, 3, 0.3, 0)
        with pytest.raises(ValueError):
            buf.update_batch([1, 1], np.ones((2, 3)) / np.sqrt(3))

    def test_drift_over_many_updates(self):
        buf, rng = random_buffer(5000, 50, 16, 0.3, 6)
        idx = rng.integers(0, 5000, 10**5)
        z = sample_uniform_sphere(10**5, 16, rng)
        for i, zi in zip(idx, z):
            buf.update_sample(i, zi)
        incremental = buf.class_sums.copy()
        buf.refresh_sums()
        assert np.max(np.abs(incremental - buf.class_sums)) < 1e-6


class TestConcentrations:
    def test_all_equal_rows_hit_cap(self):
        buf = MemoryBuffer([eye(4, 2)] * 3, [0, 0, 0], 0.3)
        conc = buf.epoch_concentrations()
        assert conc.r_hat[0] == 1.0
        assert conc.kappa_hat[0] == KAPPA_CAP

    def test_antipodal(self):
        buf = MemoryBuffer([eye(4, 0), -eye(4, 0)], [0, 0], 0.3)
        conc = buf.epoch_concentrations()
        assert conc.r_hat[0] == 0.0 and conc.kappa_hat[0] == 0.0

    def test_two_axes(self):
        buf = MemoryBuffer([eye(4, 0), eye(4, 1)], [0, 0], 0.3)
        conc = buf.epoch_concentrations()
        assert conc.r_hat[0] == pytest.approx(0.7071068, abs=1e-7)
        assert conc.kappa_hat[0] == pytest.approx(4.9497475, abs=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force_pipeline(self, seed):
        rng = np.random.default_rng(seed)
        C = int(rng.integers(2, 51))
        N = int(rng.integers(C, 5001))
        buf, rng = random_buffer(N, C, 16, 0.3, seed)
        idx = rng.permutation(N)[: N // 2]
        buf.update_batch(idx, sample_uniform_sphere(idx.size, 16, rng) + 0.5 * eye(16, 0))
        buf.vectors /= np.linalg.norm(buf.vectors, axis=1, keepdims=True)
        buf.refresh_sums()
        conc = buf.epoch_concentrations()
        for c in range(C):
            r = resultant_length(buf.vectors[buf.labels == c])
            assert conc.r_hat[c] == r
            assert conc.kappa_hat[c] == estimate_kappa(r, 16)


class TestSnapshot:
    def test_round_trip(self, tmp_path):
        buf, _ = random_buffer(120, 7, 5, 0.3, 2)
        path = tmp_path / "b.kmb"
        buf.dump(path)
        back = MemoryBuffer.load(path)
        assert path.read_bytes()[:4] == b"KMB1"
        np.testing.assert_array_equal(back.labels, buf.labels)
        np.testing.assert_allclose(back.vectors, buf.vectors, atol=1e-6)
        assert back.num_classes == 7

    def test_corrupt(self, tmp_path):
        buf, _ = random_buffer(30, 3, 4, 0.3, 2)
        path = tmp_path / "b.kmb"
        buf.dump(path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-3])
        with pytest.raises(FormatError):
            MemoryBuffer.load(path)
        path.write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(FormatError, match="KMB1"):
            MemoryBuffer.load(path)
