import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvf.errors import ConfigError, FormatError, NumericError, ShapeError, UsageError
from rvf.math_core import (AdamState, Mlp, adam_step, backward, forward,
                           load_params, save_params, soft_update)
from rvf.oracles import finite_difference, relative_gradient_error


def make_net(widths, seed=0, **kwargs):
    return Mlp.init(widths, np.random.default_rng(seed), **kwargs)


class TestForward:
    def test_zero_weights_return_last_bias(self):
        net = make_net((3, 5, 2))
        for w in net.weights:
            w[:] = 0.0
        net.biases[-1][:] = [1.5, -2.0]
        out, _ = forward(net, np.array([1.0, 2.0, 3.0]))
        assert np.allclose(out, [1.5, -2.0])

    def test_identity_single_layer(self):
        net = make_net((4, 4))
        net.weights[0] = np.eye(4)
        net.biases[0][:] = 0.0
        x = np.array([0.3, -1.2, 5.0, 0.0])
        out, _ = forward(net, x)
        assert np.array_equal(out, x)

    def test_matches_straight_line_reevaluation(self):
        # Independent re-evaluation of the affine + relu chain.
        net = make_net((3, 7, 2), seed=11)
        x = np.random.default_rng(5).normal(size=3)
        h = np.maximum(x @ net.weights[0] + net.biases[0], 0.0)
        expected = h @ net.weights[1] + net.biases[1]
        out, _ = forward(net, x)
        assert np.allclose(out, expected, atol=0, rtol=1e-15)

    def test_batch_matches_per_row(self):
        # gemm vs gemv may differ in summation order; agreement to 1e-13.
        net = make_net((3, 6, 2), seed=2)
        xs = np.random.default_rng(3).normal(size=(5, 3))
        batch_out, _ = forward(net, xs)
        for i in range(5):
            row_out, _ = forward(net, xs[i])
            assert np.allclose(batch_out[i], row_out, rtol=1e-13, atol=1e-13)

    def test_dimension_mismatch_raises(self):
        net = make_net((3, 2))
        with pytest.raises(ShapeError):
            forward(net, np.ones(4))


class TestBackward:
    def test_linear_quadratic_analytic(self):
        # y = W x (1 output), loss = y^2, dloss/dW = 2 y x^T.
        net = make_net((3, 1))
        net.biases[0][:] = 0.0
        x = np.array([1.0, -2.0, 0.5])
        y, cache = forward(net, x)
        grads, _ = backward(net, cache, 2.0 * y)
        assert np.allclose(grads["w0"], 2.0 * y * x[:, None])

    def test_zero_output_grad_gives_zero_grads(self):
        net = make_net((4, 8, 3), seed=9)
        _, cache = forward(net, np.ones(4))
        grads, input_grad = backward(net, cache, np.zeros(3))
        assert all(np.all(g == 0.0) for g in grads.values())
        assert np.all(input_grad == 0.0)

    @pytest.mark.parametrize("widths,kwargs", [
        ((5, 16, 3), {}),
        ((4, 32, 32, 2), {}),
        ((3, 12, 5), {"layer_norm": True}),
        ((6, 10, 10, 1), {"activation": "tanh"}),
        ((4, 8, 8), {"final_activation": "relu"}),
    ])
    def test_gradients_match_finite_differences(self, widths, kwargs):
        net = make_net(widths, seed=sum(widths), **kwargs)
        rng = np.random.default_rng(77)
        x = rng.normal(size=(4, widths[0]))
        tgt = rng.normal(size=(4, widths[-1]))

        def loss_fn(params):
            net.set_params(params)
            out, _ = forward(net, x)
            return float(np.sum((out - tgt) ** 2))

        out, cache = forward(net, x)
        grads, _ = backward(net, cache, 2.0 * (out - tgt))
        numeric = finite_difference(loss_fn, net.get_params())
        assert relative_gradient_error(grads, numeric) <= 1e-4

    def test_stale_cache_rejected(self):
        net_a = make_net((3, 4, 2), seed=0)
        net_b = make_net((3, 5, 2), seed=0)
        _, cache = forward(net_a, np.ones(3))
        with pytest.raises(UsageError):
            backward(net_b, cache, np.ones(2))

    def test_determinism_bit_identical(self):
        runs = []
        for _ in range(2):
            net = make_net((4, 16, 3), seed=123)
            x = np.random.default_rng(5).normal(size=(8, 4))
            out, cache = forward(net, x)
            grads, _ = backward(net, cache, out)
            runs.append((out.tobytes(), {k: v.tobytes() for k, v in grads.items()}))
        assert runs[0] == runs[1]


class TestAdam:
    def test_zero_gradient_leaves_params_and_decays_moments(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState.init(params, lr=0.1)
        zero = {"w": np.zeros(2)}
        new_params, state = adam_step(params, zero, state)
        assert np.array_equal(new_params["w"], params["w"])
        # seed a moment, then a zero-grad step shrinks it by beta1
        state.m["w"][:] = 1.0
        _, state2 = adam_step(new_params, zero, state)
        assert np.allclose(state2.m["w"], 0.9)

    def test_first_step_magnitude_is_lr_times_sign(self):
        g = np.array([0.3, -7.0, 1e-4])
        params = {"w": np.zeros(3)}
        state = AdamState.init(params, lr=1e-3)
        new_params, _ = adam_step(params, {"w": g}, state)
        # bias correction makes m_hat / sqrt(v_hat) = sign(g) up to eps
        assert np.allclose(new_params["w"], -1e-3 * np.sign(g), atol=1e-6)

    def test_two_step_trace_matches_hand_computation(self):
        lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
        g1, g2 = 0.7, -0.7
        params = {"w": np.array([0.5])}
        state = AdamState.init(params, lr=lr)
        p1, state = adam_step(params, {"w": np.array([g1])}, state)
        p2, state = adam_step(p1, {"w": np.array([g2])}, state)
        # hand trace
        m1, v1 = (1 - b1) * g1, (1 - b2) * g1 ** 2
        u1 = lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
        m2, v2 = b1 * m1 + (1 - b1) * g2, b2 * v1 + (1 - b2) * g2 ** 2
        u2 = lr * (m2 / (1 - b1 ** 2)) / (np.sqrt(v2 / (1 - b2 ** 2)) + eps)
        assert np.allclose(p1["w"], 0.5 - u1, atol=1e-15)
        assert np.allclose(p2["w"], 0.5 - u1 - u2, atol=1e-15)
        # after the sign flip the update is smaller than the naive lr*sign step
        assert abs(u2) < lr

    def test_nonfinite_gradient_names_parameter(self):
        params = {"ok": np.ones(2), "bad": np.ones(2)}
        state = AdamState.init(params)
        grads = {"ok": np.zeros(2), "bad": np.array([1.0, np.nan])}
        with pytest.raises(NumericError, match="bad"):
            adam_step(params, grads, state)

    def test_shape_mismatch(self):
        params = {"w": np.ones(3)}
        state = AdamState.init(params)
        with pytest.raises(ShapeError):
            adam_step(params, {"w": np.ones(4)}, state)

    def test_step_counter_increments(self):
        params = {"w": np.ones(1)}
        state = AdamState.init(params)
        _, state = adam_step(params, {"w": np.ones(1)}, state)
        _, state = adam_step(params, {"w": np.ones(1)}, state)
        assert state.step == 2


class TestSoftUpdate:
    @pytest.mark.parametrize("rho,expected", [(1.0, 2.0), (0.0, 4.0), (0.5, 3.0)])
    def test_endpoint_and_midpoint(self, rho, expected):
        out = soft_update({"w": np.array([2.0])}, {"w": np.array([4.0])}, rho)
        assert np.allclose(out["w"], expected)

    @pytest.mark.parametrize("rho", [-0.1, 1.5])
    def test_rho_out_of_range(self, rho):
        with pytest.raises(ConfigError):
            soft_update({"w": np.ones(1)}, {"w": np.ones(1)}, rho)

    @given(st.floats(0.0, 1.0), st.lists(st.floats(-50, 50), min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_stays_between_endpoints(self, rho, values):
        target = np.asarray(values)
        online = target[::-1].copy()
        out = soft_update({"w": target}, {"w": online}, rho)["w"]
        lo = np.minimum(target, online) - 1e-12
        hi = np.maximum(target, online) + 1e-12
        assert np.all(out >= lo) and np.all(out <= hi)


class TestParamsFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        params = {"a/w": rng.normal(size=(3, 4)), "b": rng.normal(size=7)}
        path = tmp_path / "p.ckpt"
        save_params(path, params, {"note": 1})
        loaded, meta = load_params(path)
        assert meta == {"note": 1}
        assert set(loaded) == set(params)
        for k in params:
            assert np.array_equal(loaded[k], params[k])

    def test_truncated_payload_errors_with_offset(self, tmp_path):
        path = tmp_path / "p.ckpt"
        save_params(path, {"w": np.ones((4, 4))}, {})
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(FormatError, match="offset"):
            load_params(path)

    def test_corrupt_header_errors(self, tmp_path):
        path = tmp_path / "p.ckpt"
        path.write_bytes((40).to_bytes(8, "little") + b"x" * 40)
        with pytest.raises(FormatError):
            load_params(path)
