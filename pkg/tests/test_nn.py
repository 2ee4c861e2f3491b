import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edfa_twin import nn
from edfa_twin.errors import DimensionMismatch, EmptyMask, InsufficientBatch, MissingReference, SchemaMismatch

SMALL = (6, 5, 4, 3)


def small_net(seed=0, dims=SMALL):
    return nn.init_network(np.random.default_rng(seed), dims)


class TestSelu:
    def test_values(self):
        assert nn.selu(0.0) == 0.0
        assert nn.selu(1.0) == pytest.approx(1.050, abs=1e-15)
        assert abs(nn.selu(-999.0) - (-1.050 * 1.673)) < 1e-12
        assert abs(nn.selu(-999.0) + 1.75665) < 1e-12

    def test_grad_matches_difference(self):
        x = np.array([-3.0, -0.5, 0.5, 2.0])
        h = 1e-6
        np.testing.assert_allclose(nn.selu_grad(x), (nn.selu(x + h) - nn.selu(x - h)) / (2 * h), rtol=1e-8)

    def test_full_precision(self):
        net = nn.init_network(np.random.default_rng(0), full_precision_selu=True)
        assert net.selu_alpha == nn.SELU_ALPHA_FULL


class TestInit:
    def test_counts(self):
        net = nn.init_network(np.random.default_rng(0))
        assert nn.param_count(net) == 119_395
        assert nn.flop_count(net) == 238_095
        assert nn.param_count((1, 1)) == 2 and nn.flop_count((1, 1)) == 3

    def test_deterministic(self):
        a, b = nn.init_network(np.random.default_rng(4)), nn.init_network(np.random.default_rng(4))
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_variance(self):
        net = nn.init_network(np.random.default_rng(0))
        for W in net.weights:
            assert abs(W.var() * W.shape[0] - 1) < 0.2
        assert all(np.all(b == 0) for b in net.biases)


class TestForward:
    def test_zero_weights(self):
        net = small_net()
        net.weights = [np.zeros_like(w) for w in net.weights]
        net.biases = [np.arange(b.size, dtype=float) for b in net.biases]
        out, _ = nn.forward(net, np.ones((2, 6)))
        assert np.array_equal(out, np.tile(net.biases[-1], (2, 1)))

    def test_batch_consistency(self, rng):
        net = nn.init_network(rng)
        X = rng.normal(size=(5, 196))
        batch = nn.forward(net, X)[0]
        # BLAS picks different kernels for one row and for a matrix, so rows agree to rounding
        for i in range(5):
            np.testing.assert_allclose(nn.forward(net, X[i])[0][0], batch[i], rtol=0, atol=1e-12)

    def test_oracle(self, rng):
        net = small_net(3)
        X = rng.normal(size=(4, 6))
        h = X
        for l, (W, b) in enumerate(zip(net.weights, net.biases)):
            z = np.array([[sum(h[n, i] * W[i, j] for i in range(W.shape[0])) + b[j]
                           for j in range(W.shape[1])] for n in range(h.shape[0])])
            h = z if l == len(net.weights) - 1 else np.where(z > 0, 1.05 * z, 1.05 * 1.673 * (np.exp(z) - 1))
        np.testing.assert_allclose(nn.forward(net, X)[0], h, atol=1e-12)

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            nn.forward(small_net(), np.ones((1, 7)))


class TestLosses:
    def test_weighted_mse_toy(self):
        pred = np.array([[0.2, -0.2, 9.0]])
        assert abs(nn.weighted_mse(pred, np.zeros((1, 3)), [[1, 1, 0]]) - 0.04) < 1e-12
        assert nn.weighted_mse(pred, pred, np.ones((1, 3))) == 0.0

    def test_batch_mean_of_record_means(self):
        pred = np.array([[1.0, 0.0], [1.0, 1.0]])
        assert nn.weighted_mse(pred, np.zeros((2, 2)), [[1, 0], [1, 1]]) == 1.0

    @given(st.integers(0, 2 ** 32 - 1), st.floats(-1e3, 1e3))
    def test_inactive_ignored(self, seed, bump):
        r = np.random.default_rng(seed)
        pred, meas = r.normal(size=(3, 8)), r.normal(size=(3, 8))
        mask = r.random((3, 8)) < 0.5
        mask[:, 0] = True
        mask[:, 1] = False
        before = nn.weighted_mse(pred, meas, mask)
        pred[:, 1] += bump
        assert nn.weighted_mse(pred, meas, mask) == before

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            nn.weighted_mse(np.zeros((1, 2)), np.zeros((1, 2)), [[0, 0]])

    def test_covariance_toy(self):
        assert np.array_equal(nn.batch_covariance([[1, 0], [-1, 0]]), [[2, 0], [0, 0]])
        assert np.all(nn.batch_covariance(np.ones((5, 3))) == 0)
        with pytest.raises(InsufficientBatch):
            nn.batch_covariance(np.ones((1, 3)))

    @given(st.integers(0, 2 ** 32 - 1))
    def test_covariance_psd(self, seed):
        F = np.random.default_rng(seed).normal(size=(12, 6))
        C = nn.batch_covariance(F)
        assert np.array_equal(C, C.T)
        assert np.linalg.eigvalsh(C).min() >= -1e-10
        np.testing.assert_allclose(C, np.cov(F, rowvar=False), atol=1e-12)

    def test_coral_toy(self):
        assert abs(nn.coral_penalty([[2, 0], [0, 0]], [[0, 0], [0, 2]], 2) - 0.5) < 1e-12
        C = np.eye(4)
        assert nn.coral_penalty(C, C) == 0.0
        with pytest.raises(DimensionMismatch):
            nn.coral_penalty(np.eye(2), np.eye(3))

    @given(st.integers(0, 2 ** 32 - 1))
    def test_coral_shift_invariant(self, seed):
        r = np.random.default_rng(seed)
        F, C_S = r.normal(size=(10, 4)), np.eye(4)
        shifted = F + r.normal(size=4) * 10
        assert nn.coral_penalty(C_S, nn.batch_covariance(F)) == pytest.approx(
            nn.coral_penalty(C_S, nn.batch_covariance(shifted)), rel=1e-9, abs=1e-12)


def fd_gradient(net, X, Y, M, loss, l, kind, idx, h=1e-5):
    arr = (net.weights if kind == "w" else net.biases)[l]
    old = arr[idx]
    arr[idx] = old + h
    up = nn.loss_value(net, X, Y, M, loss)
    arr[idx] = old - h
    down = nn.loss_value(net, X, Y, M, loss)
    arr[idx] = old
    return (up - down) / (2 * h)


class TestBackward:
    def test_matches_fd_with_coral(self, rng):
        net = small_net(1, (6, 8, 7, 5, 3))
        X, Y = rng.normal(size=(9, 6)), rng.normal(size=(9, 3))
        M = rng.random((9, 3)) < 0.7
        M[:, 0] = True
        loss = nn.LossSpec(0.4, np.eye(5) * 2)
        grads, lb = nn.backward(net, X, Y, M, loss)
        assert lb.coral > 0
        for l in range(net.n_layers):
            for kind, g in (("w", grads.weights[l]), ("b", grads.biases[l])):
                for idx in np.ndindex(g.shape):
                    fd = fd_gradient(net, X, Y, M, loss, l, kind, idx)
                    assert abs(fd - g[idx]) <= 1e-6 * max(1.0, abs(fd))

    def test_lambda_zero_is_mse_path(self, rng):
        net = small_net()
        X, Y = rng.normal(size=(4, 6)), rng.normal(size=(4, 3))
        M = np.ones((4, 3))
        a, _ = nn.backward(net, X, Y, M)
        b, lb = nn.backward(net, X, Y, M, nn.LossSpec(0.0, np.eye(4)))
        assert all(np.array_equal(x, y) for x, y in zip(a.weights + a.biases, b.weights + b.biases))
        assert lb.coral == 0.0

    def test_missing_reference(self):
        with pytest.raises(MissingReference):
            nn.backward(small_net(), np.ones((3, 6)), np.zeros((3, 3)), np.ones((3, 3)), nn.LossSpec(1.0))


class TestAdam:
    def test_zero_gradients(self):
        net = small_net()
        before = [w.copy() for w in net.weights]
        g = nn.Gradients([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases])
        nn.adam_step(net, nn.init_adam(net), g, 1e-3)
        assert all(np.array_equal(a, b) for a, b in zip(before, net.weights))

    def test_clip(self):
        g = nn.Gradients([np.array([[6.0, 8.0]])], [np.zeros(2)])
        c = nn.clip_gradients(g, 1.0)
        np.testing.assert_allclose(c.weights[0], [[0.6, 0.8]])
        assert nn.clip_gradients(g, 100.0) is g

    def test_scalar_recurrence(self):
        net = nn.Network((1, 1), [np.array([[1.0]])], [np.array([0.5])])
        state = nn.init_adam(net)
        g = nn.Gradients([np.array([[0.3]])], [np.array([-0.2])])
        w, m, v = 1.0, 0.0, 0.0
        for t in (1, 2):
            nn.adam_step(net, state, g, 0.01, clip=None)
            m = 0.9 * m + 0.1 * 0.3
            v = 0.999 * v + 0.001 * 0.09
            w -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert abs(net.weights[0][0, 0] - w) < 1e-15

    def test_per_layer_rates(self):
        net = small_net()
        before = [w.copy() for w in net.weights]
        grads = nn.Gradients([np.ones_like(w) for w in net.weights], [np.ones_like(b) for b in net.biases])
        nn.adam_step(net, nn.init_adam(net), grads, [0.0, 1e-3, 1e-2], clip=None)
        assert np.array_equal(net.weights[0], before[0])
        np.testing.assert_allclose(before[1] - net.weights[1], 1e-3, rtol=1e-6)
        np.testing.assert_allclose(before[2] - net.weights[2], 1e-2, rtol=1e-6)
        with pytest.raises(DimensionMismatch):
            nn.adam_step(net, nn.init_adam(net), grads, [1e-3])


class TestCheckpoint:
    def test_round_trip_bytes(self, tmp_path, rng):
        net = nn.init_network(rng)
        net.coral_reference = np.eye(100) * 0.3
        net.metadata = {"b": 1, "a": [0.1, "x"]}
        net.gain_offset = True
        p1 = nn.save_checkpoint(net, tmp_path / "a.json")
        back = nn.load_checkpoint(p1)
        p2 = nn.save_checkpoint(back, tmp_path / "b.json")
        assert p1.read_bytes() == p2.read_bytes()
        assert all(np.array_equal(a, b) for a, b in zip(net.weights, back.weights))
        assert back.gain_offset and np.array_equal(back.coral_reference, net.coral_reference)

    def test_schema(self, tmp_path):
        p = nn.save_checkpoint(small_net(), tmp_path / "c.json")
        doc = json.loads(p.read_text())
        doc["schema_version"] = "0"
        with pytest.raises(SchemaMismatch):
            nn.network_from_dict(doc)

    @settings(max_examples=50)
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_float_exact(self, x):
        assert float(json.loads(nn.dumps_exact([x]))[0]) == x

    def test_predict_adds_g0(self, rng):
        net = nn.init_network(rng)
        X = rng.normal(size=(2, 196))
        base = net.predict(X)
        net.gain_offset = True
        np.testing.assert_array_equal(net.predict(X), base + X[:, :1])
