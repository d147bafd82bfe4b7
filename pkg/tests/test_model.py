import numpy as np
import pytest

from kappaface.errors import DimensionMismatchError, FormatError, StaleCacheError, ZeroVectorError
from kappaface.model import (ClassifierParams, MlpParams, init_classifier, init_mlp, load_checkpoint,
                             mlp_backward, mlp_forward, save_checkpoint, sgd_step)
from kappaface.sphere import normalize

from conftest import central_diff, rel_err

SHAPES = [[3, 2], [5, 4, 3], [6, 8, 8, 4], [32, 16, 16]]


class TestForward:
    def test_identity_layer(self):
        p = MlpParams([np.eye(4)], [np.zeros(4)])
        x = np.random.default_rng(0).standard_normal((3, 4))
        out, _ = mlp_forward(p, x)
        np.testing.assert_array_equal(out, x)

    def test_zero_weights(self):
        p = MlpParams([np.zeros((3, 5)), np.zeros((5, 2))], [np.zeros(5), np.zeros(2)])
        out, _ = mlp_forward(p, np.ones((2, 3)))
        np.testing.assert_array_equal(out, 0.0)
        with pytest.raises(ZeroVectorError):
            normalize(out[0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            mlp_forward(init_mlp([4, 3]), np.ones((2, 5)))
        with pytest.raises(DimensionMismatchError):
            MlpParams([np.ones((3, 4)), np.ones((5, 2))], [np.zeros(4), np.zeros(2)])

    def test_deterministic(self):
        p = init_mlp([5, 7, 3], seed=4)
        x = np.random.default_rng(1).standard_normal((6, 5))
        np.testing.assert_array_equal(mlp_forward(p, x)[0], mlp_forward(p, x)[0])

    def test_init_bounds(self):
        p = init_mlp([24, 10, 3], seed=0)
        assert np.abs(p.weights[0]).max() <= np.sqrt(6 / 24)
        assert np.abs(p.weights[1]).max() <= np.sqrt(6 / 10)
        assert all(np.all(b == 0) for b in p.biases)
        np.testing.assert_array_equal(init_mlp([24, 10, 3], seed=0).weights[0], p.weights[0])


class TestBackward:
    @pytest.mark.parametrize("dims", SHAPES)
    @pytest.mark.parametrize("activation", ["relu", "tanh"])
    def test_finite_differences(self, dims, activation):
        rng = np.random.default_rng(sum(dims))
        p = init_mlp(dims, activation, seed=rng)
        p = MlpParams(p.weights, [rng.standard_normal(b.shape) * 0.1 for b in p.biases], activation)
        x = rng.standard_normal((4, dims[0]))
        R = rng.standard_normal((4, dims[-1]))
        out, cache = mlp_forward(p, x)
        grads, gx = mlp_backward(p, cache, R)
        arrays = p.arrays()
        for k, a in enumerate(arrays):
            def f(v, k=k):
                arr = list(arrays)
                arr[k] = v
                return float(np.sum(mlp_forward(MlpParams.from_arrays(arr, activation), x)[0] * R))
            assert rel_err(grads[k], central_diff(f, a)) < 1e-4
        gx_fd = central_diff(lambda v: float(np.sum(mlp_forward(p, v)[0] * R)), x)
        assert rel_err(gx, gx_fd) < 1e-4

    def test_zero_grad(self):
        p = init_mlp([4, 6, 3], seed=2)
        _, cache = mlp_forward(p, np.ones((2, 4)))
        grads, gx = mlp_backward(p, cache, np.zeros((2, 3)))
        assert all(np.all(g == 0) for g in grads) and np.all(gx == 0)

    def test_single_layer_closed_form(self):
        rng = np.random.default_rng(3)
        p = MlpParams([rng.standard_normal((4, 3))], [np.zeros(3)])
        x = rng.standard_normal((1, 4))
        g = rng.standard_normal((1, 3))
        _, cache = mlp_forward(p, x)
        grads, gx = mlp_backward(p, cache, g)
        np.testing.assert_allclose(grads[0], x.T @ g, rtol=0, atol=1e-15)
        np.testing.assert_allclose(grads[1], g[0], rtol=0, atol=1e-15)
        np.testing.assert_allclose(gx, g @ p.weights[0].T, rtol=0, atol=1e-15)

    def test_linear_in_grad_output(self):
        rng = np.random.default_rng(5)
        p = init_mlp([5, 6, 2], seed=5)
        _, cache = mlp_forward(p, rng.standard_normal((3, 5)))
        g1, g2 = rng.standard_normal((2, 3, 2))
        a, _ = mlp_backward(p, cache, g1)
        b, _ = mlp_backward(p, cache, g2)
        c, _ = mlp_backward(p, cache, 2 * g1 - g2)
        for x, y, z in zip(a, b, c):
            np.testing.assert_allclose(z, 2 * x - y, atol=1e-12)

    def test_stale_cache(self):
        p = init_mlp([4, 6, 3], seed=0)
        q = init_mlp([4, 3], seed=0)
        _, cache = mlp_forward(p, np.ones((2, 4)))
        with pytest.raises(StaleCacheError):
            mlp_backward(q, cache, np.ones((2, 3)))
        with pytest.raises(StaleCacheError):
            mlp_backward(p, cache, np.ones((5, 3)))


class TestSgd:
    def test_plain_descent(self):
        p, g = [np.array([1.0, -2.0])], [np.array([0.5, 0.25])]
        new, _ = sgd_step(p, g, None, 0.1, momentum=0.0, weight_decay=0.0)
        np.testing.assert_allclose(new[0], [0.95, -2.025])

    def test_fixed_point(self):
        p = [np.array([3.0, 4.0])]
        new, v = sgd_step(p, [np.zeros(2)], None, 0.5, momentum=0.9, weight_decay=0.0)
        np.testing.assert_array_equal(new[0], p[0])
        np.testing.assert_array_equal(v[0], 0.0)

    def test_two_momentum_steps(self):
        g = np.array([1.0, -3.0])
        p0 = [np.zeros(2)]
        p1, v1 = sgd_step(p0, [g], None, 0.01, momentum=0.9, weight_decay=0.0)
        p2, v2 = sgd_step(p1, [g], v1, 0.01, momentum=0.9, weight_decay=0.0)
        np.testing.assert_allclose(v2[0], 1.9 * g)
        np.testing.assert_allclose(p0[0] - p2[0], 0.01 * g * 2.9)

    def test_weight_decay(self):
        new, v = sgd_step([np.array([2.0])], [np.array([0.0])], None, 1.0, momentum=0.0, weight_decay=0.5)
        np.testing.assert_allclose(new[0], [1.0])

    def test_inputs_not_mutated(self):
        p, g = [np.ones(3)], [np.ones(3)]
        sgd_step(p, g, None, 0.1)
        np.testing.assert_array_equal(p[0], 1.0)

    def test_quadratic_decreases(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((5, 5))
        A = A @ A.T + np.eye(5)
        x = [rng.standard_normal(5)]
        f = lambda v: 0.5 * v @ A @ v
        vals = [f(x[0])]
        for _ in range(50):
            x, _ = sgd_step(x, [A @ x[0]], None, 0.01, momentum=0.0, weight_decay=0.0)
            vals.append(f(x[0]))
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.parametrize("kw", [dict(lr=0.0), dict(lr=0.1, momentum=1.0), dict(lr=0.1, weight_decay=-1.0)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            sgd_step([np.ones(1)], [np.ones(1)], None, **kw)


class TestCheckpoint:
    def make(self):
        return init_mlp([6, 5, 4], "tanh", seed=1), init_classifier(7, 4, seed=2)

    def test_round_trip(self, tmp_path):
        mlp, clf = self.make()
        path = tmp_path / "m.kmm"
        save_checkpoint(path, mlp, clf)
        assert path.read_bytes()[:4] == b"KMM1"
        mlp2, clf2 = load_checkpoint(path)
        assert mlp2.activation == "tanh"
        for a, b in zip(mlp.arrays(), mlp2.arrays()):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(clf.W, clf2.W)

    @pytest.mark.parametrize("mutate", [lambda b: b[:-8], lambda b: b"KMM2" + b[4:], lambda b: b + b"\0",
                                        lambda b: b[:3]])
    def test_corrupt(self, tmp_path, mutate):
        mlp, clf = self.make()
        path = tmp_path / "m.kmm"
        save_checkpoint(path, mlp, clf)
        path.write_bytes(mutate(path.read_bytes()))
        with pytest.raises(FormatError) as info:
            load_checkpoint(path)
        assert str(path) in str(info.value)

    def test_classifier_rejects_nan(self):
        with pytest.raises(ValueError):
            ClassifierParams(np.array([[np.nan, 1.0]]))
