import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nncommittee.mlp import (
    MlpModel,
    MlpTopology,
    batch_jacobian,
    forward,
    init_weights,
    jacobian,
    load_model,
    save_model,
)
from nncommittee.data import Normalizer


def loop_forward(m, x):
    """Straight-line scalar evaluation of W2 tanh(W1 x + b1) + b2."""
    t = m.topology
    hidden = []
    for h in range(t.hidden_dim):
        z = m.b1[h]
        for p in range(t.input_dim):
            z += m.w1[h, p] * x[p]
        hidden.append(math.tanh(z))
    out = []
    for j in range(t.output_dim):
        o = m.b2[j]
        for h in range(t.hidden_dim):
            o += m.w2[j, h] * hidden[h]
        out.append(o)
    return np.array(out)


def fd_jacobian(m, x, h=1e-5):
    theta = m.flatten()
    cols = []
    for w in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[w] += h
        dn[w] -= h
        cols.append((forward(m.with_params(up), x) - forward(m.with_params(dn), x)) / (2 * h))
    return np.stack(cols, axis=1)


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


class TestTopology:
    def test_default_param_count(self):
        # 30*9 + 30 + 22*30 + 22
        assert MlpTopology(9, 30, 22).n_params == 982
        assert MlpTopology().n_params == 982

    def test_invalid(self):
        with pytest.raises(ValueError):
            MlpTopology(0, 3, 2)


class TestInit:
    def test_deterministic(self):
        t = MlpTopology()
        assert init_weights(t, 4) == init_weights(t, 4)

    def test_seed_changes_weights(self):
        t = MlpTopology()
        assert init_weights(t, 4) != init_weights(t, 5)

    def test_fan_in_bounds(self):
        m = init_weights(MlpTopology(9, 30, 22), 0)
        assert np.abs(m.w1).max() <= 1 / 3 and np.abs(m.b1).max() <= 1 / 3
        a2 = 1 / math.sqrt(30)
        assert np.abs(m.w2).max() <= a2 and np.abs(m.b2).max() <= a2
        assert m.flatten().shape == (982,)


class TestFlatten:
    def test_order(self):
        t = MlpTopology(2, 3, 2)
        theta = np.arange(t.n_params, dtype=float)
        m = MlpModel.unflatten(t, theta)
        np.testing.assert_array_equal(m.w1, [[0, 1], [2, 3], [4, 5]])
        np.testing.assert_array_equal(m.b1, [6, 7, 8])
        np.testing.assert_array_equal(m.w2, [[9, 10, 11], [12, 13, 14]])
        np.testing.assert_array_equal(m.b2, [15, 16])

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 1000))
    def test_round_trip(self, p, h, n, seed):
        t = MlpTopology(p, h, n)
        v = np.random.default_rng(seed).standard_normal(t.n_params)
        np.testing.assert_array_equal(MlpModel.unflatten(t, v).flatten(), v)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            MlpModel.unflatten(MlpTopology(2, 2, 2), np.zeros(3))


class TestForward:
    def test_zero_model_outputs_b2(self):
        t = MlpTopology(3, 4, 2)
        theta = np.zeros(t.n_params)
        theta[-2:] = [0.5, -2.0]
        m = MlpModel.unflatten(t, theta)
        np.testing.assert_array_equal(forward(m, np.ones(3)), [0.5, -2.0])

    def test_zero_first_layer(self):
        rng = np.random.default_rng(0)
        t = MlpTopology(3, 4, 2)
        m = MlpModel(t, np.zeros((4, 3)), np.zeros(4), rng.standard_normal((2, 4)), np.array([1.0, 2.0]))
        np.testing.assert_array_equal(forward(m, rng.standard_normal(3)), [1.0, 2.0])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        for seed in range(10):
            m = init_weights(MlpTopology(9, 30, 22), seed)
            x = rng.standard_normal(9)
            np.testing.assert_allclose(forward(m, x), loop_forward(m, x), rtol=0, atol=1e-12)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        m = init_weights(MlpTopology(4, 5, 3), 0)
        X = rng.standard_normal((7, 4))
        np.testing.assert_allclose(forward(m, X), np.stack([forward(m, x) for x in X]), atol=1e-15)

    def test_non_finite_input(self):
        m = init_weights(MlpTopology(2, 2, 2), 0)
        with pytest.raises(ValueError, match="non-finite"):
            forward(m, [1.0, np.inf])

    def test_wrong_dims(self):
        m = init_weights(MlpTopology(2, 2, 2), 0)
        with pytest.raises(ValueError):
            forward(m, [1.0, 2.0, 3.0])

    @given(st.floats(-5, 5), st.integers(0, 100))
    def test_homogeneous_in_output_layer(self, c, seed):
        m = init_weights(MlpTopology(3, 4, 2), seed)
        x = np.random.default_rng(seed).standard_normal(3)
        scaled = MlpModel(m.topology, m.w1, m.b1, c * m.w2, c * m.b2)
        np.testing.assert_allclose(forward(scaled, x), c * forward(m, x), atol=1e-12)


class TestJacobian:
    def test_output_bias_columns(self):
        t = MlpTopology(3, 4, 5)
        m = init_weights(t, 0)
        J = jacobian(m, np.ones(3))
        o3 = t.offsets()[2]
        np.testing.assert_array_equal(J[:, o3:], np.eye(5))

    def test_zero_input_zero_bias(self):
        t = MlpTopology(3, 4, 2)
        m0 = init_weights(t, 0)
        m = MlpModel(t, m0.w1, np.zeros(4), m0.w2, m0.b2)
        J = jacobian(m, np.zeros(3))
        np.testing.assert_array_equal(J[:, :t.offsets()[0]], 0.0)

    def test_finite_differences(self):
        rng = np.random.default_rng(3)
        for seed in range(10):
            m = init_weights(MlpTopology(4, 5, 3), seed)
            x = rng.standard_normal(4)
            assert rel_err(jacobian(m, x), fd_jacobian(m, x)) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
    def test_finite_differences_property(self, p, h, n, seed):
        rng = np.random.default_rng(seed)
        m = MlpModel.unflatten(MlpTopology(p, h, n), rng.standard_normal(MlpTopology(p, h, n).n_params))
        x = rng.standard_normal(p)
        assert rel_err(jacobian(m, x), fd_jacobian(m, x)) < 1e-6

    def test_batch_shape(self):
        m = init_weights(MlpTopology(9, 30, 22), 0)
        assert batch_jacobian(m, np.zeros((4, 9))).shape == (4, 22, 982)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = init_weights(MlpTopology(9, 30, 22), 7)
        n = Normalizer(np.arange(9.0), np.full(9, 0.3))
        save_model(m, tmp_path / "m.json", n)
        m2, n2 = load_model(tmp_path / "m.json")
        assert m2 == m
        np.testing.assert_array_equal(n2.mean, n.mean)
        np.testing.assert_array_equal(n2.std, n.std)

    def test_rejects_foreign_file(self, tmp_path):
        (tmp_path / "x.json").write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            load_model(tmp_path / "x.json")
