import numpy as np
import pytest

from dyngcn import layers as L
from dyngcn.gradcheck import check_case, layer_cases
from dyngcn.graph import renormalize_adjacency

A_HALF = np.array([[0.5, 0.5], [0.5, 0.5]])
X2 = np.array([[1.0, -1.0], [2.0, 0.0]])


def zero_lstm(d=1, N=1):
    return {"W": np.zeros((d, 4 * N)), "U": np.zeros((N, 4 * N)), "b": np.zeros(4 * N), "r": np.zeros(4 * N)}


class TestGC:
    def test_identity_adjacency_and_weight(self, rng):
        x = rng.standard_normal((4, 3))
        out, _ = L.gc_forward(x, renormalize_adjacency(np.zeros((4, 4))), {"B": np.eye(3)})
        np.testing.assert_array_equal(out, np.maximum(x, 0))

    def test_two_vertex_example(self):
        out, _ = L.gc_forward(X2, A_HALF, {"B": np.eye(2)})
        np.testing.assert_allclose(out, [[1.5, 0.0], [1.5, 0.0]])

    def test_zero_weight(self, rng):
        out, _ = L.gc_forward(rng.standard_normal((3, 2)), np.eye(3), {"B": np.zeros((2, 4))})
        np.testing.assert_array_equal(out, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="B is"):
            L.gc_forward(X2, A_HALF, {"B": np.eye(3)})

    def test_dead_relu_has_zero_weight_gradient(self):
        x = np.ones((2, 2))
        params = {"B": -np.ones((2, 3))}
        out, node = L.gc_forward(x, A_HALF, params)
        _, grads = L.layer_backward(node, np.ones_like(out))
        np.testing.assert_array_equal(grads["B"], 0.0)


class TestDynamicGC:
    def test_single_step_equals_gc(self, rng):
        x = rng.standard_normal((1, 5, 3))
        a = renormalize_adjacency(np.ones((5, 5)) - np.eye(5))[None]
        p = L.init_gc(rng, 3, 4)
        np.testing.assert_array_equal(L.wd_gc_forward(x, a, p)[0][0], L.gc_forward(x[0], a[0], p)[0])

    def test_repeated_step_repeats_output(self, rng):
        x = np.repeat(rng.standard_normal((1, 4, 3)), 3, axis=0)
        a = np.repeat(np.eye(4)[None], 3, axis=0)
        out, _ = L.wd_gc_forward(x, a, L.init_gc(rng, 3, 2))
        np.testing.assert_array_equal(out[0], out[2])

    def test_each_step_matches_independent_gc(self, rng):
        x = rng.standard_normal((2, 4, 3))
        raw = rng.integers(0, 2, (2, 4, 4)).astype(float)
        a = np.stack([renormalize_adjacency(np.triu(m, 1) + np.triu(m, 1).T) for m in raw])
        p = L.init_gc(rng, 3, 5)
        out, _ = L.wd_gc_forward(x, a, p)
        for t in range(2):
            np.testing.assert_allclose(out[t], L.gc_forward(x[t], a[t], p)[0], rtol=1e-15)

    def test_cd_gc_keeps_input_columns(self, rng):
        x = rng.standard_normal((3, 4, 2))
        out, _ = L.cd_gc_forward(x, np.repeat(np.eye(4)[None], 3, axis=0), L.init_gc(rng, 2, 5))
        assert out.shape == (3, 4, 7)
        np.testing.assert_array_equal(out[..., :2], x)

    def test_cd_gc_zero_weight(self, rng):
        x = rng.standard_normal((2, 3, 2))
        out, _ = L.cd_gc_forward(x, np.repeat(np.eye(3)[None], 2, axis=0), {"B": np.zeros((2, 3))})
        np.testing.assert_array_equal(out, np.concatenate([x, np.zeros((2, 3, 3))], axis=-1))

    def test_cd_gc_two_vertex_example(self):
        out, _ = L.cd_gc_forward(X2[None], A_HALF[None], {"B": np.eye(2)})
        np.testing.assert_allclose(out[0], [[1, -1, 1.5, 0], [2, 0, 1.5, 0]])

    def test_cd_gc_passthrough_gradient(self, rng):
        x = rng.standard_normal((2, 3, 2))
        out, node = L.cd_gc_forward(x, np.repeat(np.eye(3)[None], 2, axis=0), {"B": np.zeros((2, 4))})
        dout = np.zeros_like(out)
        dout[..., :2] = rng.standard_normal((2, 3, 2))
        dx, _ = L.layer_backward(node, dout)
        np.testing.assert_array_equal(dx, dout[..., :2])


class TestLSTM:
    def test_zero_parameters_one_step(self):
        h, _ = L.lstm_sequence_forward(np.array([[3.7]]), zero_lstm())
        np.testing.assert_allclose(h[0, 0], 0.5 * np.tanh(0.25), rtol=1e-15)
        np.testing.assert_allclose(h[0, 0], 0.122459, atol=5e-7)

    def test_zero_parameters_two_steps(self):
        h, _ = L.lstm_sequence_forward(np.array([[0.0], [1.0]]), zero_lstm())
        np.testing.assert_allclose(h[1, 0], 0.5 * np.tanh(0.375), rtol=1e-15)
        np.testing.assert_allclose(h[1, 0], 0.179179, atol=5e-7)

    def test_zero_parameters_tanh_candidate(self):
        # tanh(0) candidate never writes to the cell
        h, _ = L.lstm_sequence_forward(np.ones((3, 1)), zero_lstm(), candidate_tanh=True)
        np.testing.assert_array_equal(h, 0.0)

    def test_returns_every_step(self, rng):
        h, _ = L.lstm_sequence_forward(rng.standard_normal((7, 3)), L.init_lstm(rng, 3, 4))
        assert h.shape == (7, 4)

    def test_v_lstm_single_row_matches_sequence(self, rng):
        p = L.init_lstm(rng, 3, 2)
        z = rng.standard_normal((4, 1, 3))
        out, _ = L.v_lstm_forward(z, p)
        np.testing.assert_allclose(out[:, 0], L.lstm_sequence_forward(z[:, 0], p)[0], rtol=1e-14)

    def test_v_lstm_row_permutation(self, rng):
        p = L.init_lstm(rng, 3, 2)
        z = rng.standard_normal((4, 5, 3))
        perm = rng.permutation(5)
        out, _ = L.v_lstm_forward(z, p)
        np.testing.assert_allclose(L.v_lstm_forward(z[:, perm], p)[0], out[:, perm], rtol=1e-14)

    def test_v_lstm_identical_rows(self, rng):
        z = np.repeat(rng.standard_normal((3, 1, 2)), 2, axis=1)
        out, _ = L.v_lstm_forward(z, L.init_lstm(rng, 2, 3))
        np.testing.assert_array_equal(out[:, 0], out[:, 1])

    def test_parameter_shapes(self, rng):
        p = L.init_lstm(rng, 5, 3)
        assert p["W"].shape == (5, 12) and p["U"].shape == (3, 12)
        assert p["b"].shape == p["r"].shape == (12,)


class TestHeads:
    def test_vs_fc_zero_weights_uniform(self, rng):
        out, _ = L.vs_fc_forward(rng.standard_normal((2, 3, 4)), {"W": np.zeros((4, 5)), "b": np.zeros(5)})
        np.testing.assert_allclose(out, 0.2, rtol=1e-15)

    def test_vs_fc_hand_value(self):
        out, _ = L.vs_fc_forward(np.array([[1.0]]), {"W": np.array([[np.log(2.0), 0.0]]), "b": np.zeros(2)})
        np.testing.assert_allclose(out, [[2 / 3, 1 / 3]], rtol=1e-14)

    def test_vs_fc_rows_sum_to_one(self, rng):
        out, _ = L.vs_fc_forward(rng.standard_normal((3, 4, 2)), L.init_fc(rng, 2, 6))
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)

    def test_gs_fc_hand_value(self):
        p = {"W1": np.array([[1.0, 0.0]]), "b1": np.zeros(2), "W2": np.array([[1.0, 1.0]]), "b2": np.zeros(2)}
        out, _ = L.gs_fc_forward(np.array([[1.0], [2.0]]), p)
        np.testing.assert_allclose(out, [np.e ** 3 / (np.e ** 3 + 1), 1 / (np.e ** 3 + 1)], rtol=1e-14)
        np.testing.assert_allclose(out, [0.952574, 0.047426], atol=5e-7)

    def test_gs_fc_zero_first_layer_uniform(self, rng):
        p = L.init_gs_fc(rng, 3, 4, 5)
        p["W1"][:] = 0
        out, _ = L.gs_fc_forward(rng.standard_normal((2, 5, 3)), p)
        assert out.shape == (2, 4)
        np.testing.assert_allclose(out, 0.25, rtol=1e-15)


class TestDropout:
    def test_zero_rate_identity(self, rng):
        m = rng.standard_normal((3, 3))
        for mode in ("train", "eval"):
            np.testing.assert_array_equal(L.dropout_apply(m, 0.0, mode, rng)[0], m)

    def test_eval_identity(self, rng):
        m = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(L.dropout_apply(m, 0.5, "eval")[0], m)

    def test_expectation_preserved(self, rng):
        out, _ = L.dropout_apply(np.ones(100_000), 0.5, "train", rng)
        assert abs(out.mean() - 1.0) < 0.01

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            L.dropout_apply(np.ones(2), 1.0)


class TestBackward:
    @pytest.mark.parametrize("case", layer_cases(), ids=lambda c: c.name)
    def test_finite_difference(self, case):
        res = check_case(case)
        assert res.passed, res.per_tensor

    def test_missing_node(self):
        with pytest.raises(RuntimeError):
            L.layer_backward(None, np.ones(2))
