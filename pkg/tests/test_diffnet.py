"""Feed-forward networks: initialisation, forward, reverse mode, checkpoints."""
import numpy as np
import pytest

from src.diffnet import (
    ACTIVATIONS,
    NetSpec,
    forward,
    forward_with_jac,
    init_params,
    jac_input,
    load_checkpoint,
    param_count,
    save_checkpoint,
    spec_from_header,
    spec_to_header,
    unflatten,
    vjp,
)
from src.errors import ArgumentError, ConfigError, DataError

H = 1e-5


def _fd_theta(spec, theta, x, ybar):
    g = np.zeros_like(theta)
    for k in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[k] += H
        tm[k] -= H
        g[k] = np.sum((forward(spec, tp, x) - forward(spec, tm, x)) * ybar) / (2 * H)
    return g


def _fd_input(spec, theta, x):
    J = np.zeros((spec.n_out, spec.n_in))
    for k in range(spec.n_in):
        xp, xm = x.copy(), x.copy()
        xp[k] += H
        xm[k] -= H
        J[:, k] = (forward(spec, theta, xp) - forward(spec, theta, xm)) / (2 * H)
    return J


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


class TestNetSpec:
    def test_hidden_widths(self):
        spec = NetSpec.hidden(3, 4, depth=2, width=5)
        assert spec.widths == (3, 5, 5, 4)
        assert (spec.n_in, spec.n_out) == (3, 4)

    def test_param_count(self):
        assert param_count(NetSpec((3, 5, 4))) == 3 * 5 + 5 + 5 * 4 + 4

    def test_invalid_widths(self):
        with pytest.raises(ArgumentError):
            NetSpec((3,))
        with pytest.raises(ArgumentError):
            NetSpec((3, 0, 1))

    def test_unknown_activation(self):
        spec = NetSpec((1, 2, 1), activation="swish")
        with pytest.raises(ConfigError):
            forward(spec, np.zeros(param_count(spec)), [0.0])

    def test_unflatten_layout(self):
        spec = NetSpec((2, 3, 1))
        theta = np.arange(param_count(spec), dtype=float)
        (W1, b1), (W2, b2) = unflatten(spec, theta)
        np.testing.assert_array_equal(W1, np.arange(6).reshape(3, 2))
        np.testing.assert_array_equal(b1, [6, 7, 8])
        np.testing.assert_array_equal(W2, [[9, 10, 11]])
        np.testing.assert_array_equal(b2, [12])

    def test_wrong_parameter_length(self):
        with pytest.raises(ArgumentError):
            unflatten(NetSpec((2, 1)), np.zeros(5))


class TestInitParams:
    def test_deterministic(self):
        spec = NetSpec.hidden(3, 4, seed=7)
        np.testing.assert_array_equal(init_params(spec), init_params(spec))

    def test_seed_changes_weights(self):
        a = init_params(NetSpec.hidden(3, 4, seed=1))
        b = init_params(NetSpec.hidden(3, 4, seed=2))
        assert not np.array_equal(a, b)

    def test_glorot_variance(self):
        spec = NetSpec((100, 100), seed=3)
        W, b = unflatten(spec, init_params(spec))[0]
        assert np.var(W) == pytest.approx(2.0 / 200, rel=0.2)
        np.testing.assert_array_equal(b, 0.0)


class TestForward:
    def test_zero_parameters(self):
        spec = NetSpec.hidden(3, 4)
        np.testing.assert_array_equal(forward(spec, np.zeros(param_count(spec)), [1.0, 2.0, 3.0]), 0.0)

    def test_affine_layer(self):
        spec = NetSpec((1, 1))
        np.testing.assert_allclose(forward(spec, np.array([2.0, 1.0]), [3.0]), [7.0])

    def test_bias_only(self):
        spec = NetSpec((1, 1))
        np.testing.assert_allclose(forward(spec, np.array([0.0, 0.25]), [9.0]), [0.25])

    def test_hand_evaluated_tanh(self):
        spec = NetSpec((1, 1, 1), activation="tanh")
        theta = np.array([0.5, 0.1, 2.0, -0.3])
        expected = 2.0 * np.tanh(0.5 * 0.4 + 0.1) - 0.3
        np.testing.assert_allclose(forward(spec, theta, [0.4]), [expected])

    def test_batch_matches_single(self, rng):
        spec = NetSpec.hidden(3, 2, depth=2, width=6)
        theta = rng.normal(size=param_count(spec))
        X = rng.normal(size=(5, 3))
        Y = forward(spec, theta, X)
        for k in range(5):
            np.testing.assert_array_equal(Y[k], forward(spec, theta, X[k]))

    def test_input_width_checked(self):
        spec = NetSpec((2, 1))
        with pytest.raises(ArgumentError):
            forward(spec, np.zeros(3), [1.0, 2.0, 3.0])

    def test_tanh_hidden_bounded(self, rng):
        spec = NetSpec((1, 4, 1))
        theta = rng.normal(size=param_count(spec))
        (W1, b1), (W2, b2) = unflatten(spec, theta)
        y = forward(spec, theta, [1e6])
        assert abs(y[0] - b2[0]) <= np.abs(W2).sum() + 1e-12


class TestReverseMode:
    def test_linear_net_input_gradient(self, rng):
        spec = NetSpec((3, 2))
        theta = rng.normal(size=param_count(spec))
        W, _ = unflatten(spec, theta)[0]
        ybar = rng.normal(size=2)
        _, gx = vjp(spec, theta, rng.normal(size=3), ybar)
        np.testing.assert_allclose(gx, W.T @ ybar)

    def test_linear_net_jacobian(self, rng):
        spec = NetSpec((3, 2))
        theta = rng.normal(size=param_count(spec))
        np.testing.assert_allclose(jac_input(spec, theta, rng.normal(size=3)), unflatten(spec, theta)[0][0])

    def test_zero_cotangent(self, rng):
        spec = NetSpec.hidden(3, 2, depth=2, width=5)
        theta = rng.normal(size=param_count(spec))
        gt, gx = vjp(spec, theta, rng.normal(size=3), np.zeros(2))
        np.testing.assert_array_equal(gt, 0.0)
        np.testing.assert_array_equal(gx, 0.0)

    @pytest.mark.parametrize("activation", sorted(set(ACTIVATIONS) - {"relu", "leaky-relu"}))
    def test_parameter_gradient_matches_fd(self, rng, activation):
        spec = NetSpec.hidden(3, 2, depth=2, width=5, activation=activation)
        theta = 0.5 * rng.normal(size=param_count(spec))
        x, ybar = rng.normal(size=3), rng.normal(size=2)
        gt, _ = vjp(spec, theta, x, ybar)
        assert _rel(gt, _fd_theta(spec, theta, x, ybar)) < 1e-6

    def test_input_jacobian_matches_fd(self, rng):
        spec = NetSpec.hidden(4, 3, depth=3, width=6)
        theta = 0.5 * rng.normal(size=param_count(spec))
        x = rng.normal(size=4)
        assert _rel(jac_input(spec, theta, x), _fd_input(spec, theta, x)) < 1e-6

    def test_jacobian_rows_are_vjps(self, rng):
        spec = NetSpec.hidden(3, 2, depth=2, width=4)
        theta = rng.normal(size=param_count(spec))
        x = rng.normal(size=3)
        J = jac_input(spec, theta, x)
        for i in range(2):
            _, gx = vjp(spec, theta, x, np.eye(2)[i])
            np.testing.assert_array_equal(J[i], gx)

    def test_batched_theta_gradient_is_summed(self, rng):
        spec = NetSpec.hidden(2, 2, depth=1, width=4)
        theta = rng.normal(size=param_count(spec))
        X, Ybar = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        gt, gx = vjp(spec, theta, X, Ybar)
        parts = [vjp(spec, theta, X[k], Ybar[k]) for k in range(3)]
        np.testing.assert_allclose(gt, sum(p[0] for p in parts), rtol=1e-12)
        np.testing.assert_allclose(gx, np.stack([p[1] for p in parts]), rtol=1e-12)

    def test_forward_with_jac_shapes(self, rng):
        spec = NetSpec.hidden(3, 4, depth=1, width=5)
        theta = rng.normal(size=param_count(spec))
        Y, J = forward_with_jac(spec, theta, rng.normal(size=(6, 3)))
        assert Y.shape == (6, 4)
        assert J.shape == (6, 4, 3)


class TestCheckpoint:
    def test_round_trip(self, tmp_path, rng):
        spec = NetSpec.hidden(3, 4, depth=2, width=5, activation="selu", seed=11)
        theta = rng.normal(size=param_count(spec))
        header = dict(spec_to_header(spec), kind="spd")
        save_checkpoint(tmp_path / "net.ckpt", header, theta)
        loaded_header, loaded = load_checkpoint(tmp_path / "net.ckpt")
        np.testing.assert_array_equal(loaded, theta)
        assert loaded_header["kind"] == "spd"
        assert spec_from_header(loaded_header) == spec

    def test_byte_layout(self, tmp_path):
        save_checkpoint(tmp_path / "c.ckpt", {"a": "1"}, np.array([1.0, -2.0]))
        raw = (tmp_path / "c.ckpt").read_bytes()
        text = b"SPDNN-CHECKPOINT 1\na=1\nn_params=2\nEND\n"
        assert raw[:len(text)] == text
        np.testing.assert_array_equal(np.frombuffer(raw[len(text):], dtype="<f8"), [1.0, -2.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_not_a_checkpoint(self, tmp_path):
        (tmp_path / "x.ckpt").write_bytes(b"hello\nEND\n")
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "x.ckpt")

    def test_truncated_parameters(self, tmp_path):
        save_checkpoint(tmp_path / "c.ckpt", {}, np.ones(4))
        raw = (tmp_path / "c.ckpt").read_bytes()
        (tmp_path / "c.ckpt").write_bytes(raw[:-8])
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "c.ckpt")
