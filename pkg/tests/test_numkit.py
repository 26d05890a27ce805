import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrfa.errors import DegenerateInputError, DimensionError, DistributionError, NumericError, ParameterError
from lrfa.numkit import (
    GradCheckReport,
    OptimizerState,
    cosine_rows,
    grad_check,
    kl_divergence,
    matmul,
    optimizer_step,
    softmax_row,
)
from lrfa.numkit import tape as T


class TestMatmul:
    def test_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(matmul(np.eye(2), x), x)
        assert np.array_equal(matmul(x, np.eye(3)), x)

    def test_hand_product(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[0.0], [1.0]])
        assert np.array_equal(out, [[2.0], [4.0]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError) as exc:
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))
        assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)

    def test_identity_property_random(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n, m = rng.integers(1, 8, size=2)
            x = rng.normal(size=(n, m))
            assert np.array_equal(matmul(np.eye(n), x), x)
            assert np.array_equal(matmul(x, np.eye(m)), x)


class TestCosineRows:
    def test_self_similarity_diagonal(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=(5, 7))
        sim = cosine_rows(v, v)
        assert np.max(np.abs(np.diag(sim) - 1.0)) < 1e-12

    def test_orthogonal(self):
        assert cosine_rows([[1.0, 0.0]], [[0.0, 1.0]])[0, 0] == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        sim = cosine_rows([[1.0, 1.0]], [[1.0, 0.0]])
        assert sim[0, 0] == pytest.approx(0.70710678, abs=1e-8)

    def test_range(self):
        rng = np.random.default_rng(2)
        sim = cosine_rows(rng.normal(size=(6, 4)), rng.normal(size=(5, 4)))
        assert np.all(sim >= -1.0) and np.all(sim <= 1.0)

    def test_zero_row_rejected(self):
        with pytest.raises(DegenerateInputError) as exc:
            cosine_rows([[0.0, 0.0], [1.0, 0.0]], [[1.0, 1.0]])
        assert "row 0" in str(exc.value)


class TestSoftmaxRow:
    def test_symmetry(self):
        out = softmax_row([3.5, 3.5, 3.5], 0.7)
        assert np.allclose(out, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_hand_value(self):
        out = softmax_row([np.log(2.0), 0.0], 1.0)
        assert np.allclose(out, [2 / 3, 1 / 3], atol=1e-12)

    def test_stability(self):
        out = softmax_row([1000.0, 0.0], 1.0)
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0, abs=1e-12)

    def test_temperature_validation(self):
        with pytest.raises(ParameterError):
            softmax_row([1.0, 2.0], 0.0)

    @given(
        st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=12),
        st.floats(min_value=0.01, max_value=10.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_sums_to_one(self, values, tau):
        out = softmax_row(values, tau)
        assert abs(out.sum() - 1.0) < 1e-12
        # strict positivity holds until exp underflow (gaps beyond ~745 * tau)
        assert np.all(out >= 0.0)
        if (max(values) - min(values)) / tau < 700.0:
            assert np.all(out > 0.0)


class TestKlDivergence:
    def test_identical(self):
        p = np.array([0.2, 0.3, 0.5])
        assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_floor_keeps_finite(self):
        v = kl_divergence([0.5, 0.5], [1.0, 0.0])
        assert np.isfinite(v) and v > 0.0

    def test_length_mismatch(self):
        with pytest.raises(DistributionError):
            kl_divergence([1.0], [0.5, 0.5])

    def test_unnormalized_rejected(self):
        with pytest.raises(DistributionError):
            kl_divergence([0.6, 0.6], [0.5, 0.5])

    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_zero_iff_equal(self, n, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(n))
        q = rng.dirichlet(np.ones(n))
        assert kl_divergence(p, q) >= 0.0
        assert kl_divergence(p, p) < 1e-12


class TestOptimizer:
    def test_zero_gradient_zero_decay_fixed_point(self):
        params = {"p": np.array([[1.0, -2.0]])}
        state = OptimizerState(decay=0.0)
        optimizer_step(params, {"p": np.zeros((1, 2))}, state)
        assert np.array_equal(params["p"], [[1.0, -2.0]])
        assert state.step_count == 1

    def test_descent_direction(self):
        params = {"p": np.array([[1.0]])}
        state = OptimizerState(learning_rate=0.1)
        optimizer_step(params, {"p": np.array([[1.0]])}, state)
        assert params["p"][0, 0] < 1.0

    def test_deterministic(self):
        def run():
            rng = np.random.default_rng(5)
            params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(2, 2))}
            state = OptimizerState()
            for _ in range(10):
                grads = {k: rng.normal(size=v.shape) for k, v in params.items()}
                optimizer_step(params, grads, state)
            return params

        p1, p2 = run(), run()
        assert np.array_equal(p1["a"], p2["a"]) and np.array_equal(p1["b"], p2["b"])

    def test_nan_gradient_rejected(self):
        params = {"w": np.ones((1, 1))}
        with pytest.raises(NumericError) as exc:
            optimizer_step(params, {"w": np.array([[np.nan]])}, OptimizerState())
        assert "w" in str(exc.value)

    def test_step_count_increments(self):
        params = {"p": np.ones((1, 1))}
        state = OptimizerState()
        for expected in (1, 2, 3):
            optimizer_step(params, {"p": np.ones((1, 1))}, state)
            assert state.step_count == expected


class TestGradCheck:
    def test_exact_quadratic(self):
        def loss(params):
            x = T.leaf(params["x"])
            out = 0.5 * T.tsum(T.square(x))
            T.backward(out)
            return out.item(), {"x": x.grad}

        rng = np.random.default_rng(3)
        report = grad_check(loss, {"x": rng.normal(size=(4, 3))})
        assert isinstance(report, GradCheckReport)
        assert report.max_relative_error < 1e-8

    def test_wrong_gradient_detected(self):
        # analytic gradient deliberately 2x the true one; with |x| >= 1 the
        # relative error |2x - x| / max(1, 2|x|, |x|) is exactly 0.5
        def loss(params):
            x = params["x"]
            return 0.5 * float((x * x).sum()), {"x": 2.0 * x}

        rng = np.random.default_rng(4)
        x = rng.uniform(1.5, 3.0, size=(3, 3))
        report = grad_check(loss, {"x": x})
        assert report.max_relative_error == pytest.approx(0.5, abs=1e-4)

    def test_step_validation(self):
        with pytest.raises(ParameterError):
            grad_check(lambda p: (0.0, {"x": p["x"]}), {"x": np.ones((1, 1))}, step=0.0)

    def test_nonfinite_probe_rejected(self):
        def loss(params):
            x = float(params["x"][0, 0])
            return (np.inf if x > 1.0 else x), {"x": np.ones((1, 1))}

        with pytest.raises(NumericError):
            grad_check(loss, {"x": np.array([[1.0]])}, step=0.5)


class TestTapePrimitives:
    def test_broadcast_add_gradient(self):
        def loss(params):
            a = T.leaf(params["a"])
            b = T.leaf(params["b"])
            out = T.tsum(T.square(a + b))
            T.backward(out)
            return out.item(), {"a": a.grad, "b": b.grad}

        rng = np.random.default_rng(6)
        report = grad_check(loss, {"a": rng.normal(size=(4, 3)), "b": rng.normal(size=(1, 3))})
        assert report.max_relative_error < 1e-8

    def test_composite_smooth_ops(self):
        def loss(params):
            x = T.leaf(params["x"])
            y = T.tanh(x) + T.sigmoid(x) * T.softplus(x)
            z = T.row_softmax(y, 0.5)
            out = T.tsum(T.mul(z, T.log(z + 1e-3)))
            T.backward(out)
            return out.item(), {"x": x.grad}

        rng = np.random.default_rng(7)
        report = grad_check(loss, {"x": rng.normal(size=(3, 5))})
        assert report.max_relative_error < 1e-6

    def test_gather_scatter_roundtrip(self):
        def loss(params):
            x = T.leaf(params["x"])
            picked = T.gather_rows(x, [0, 2, 2, 1])
            cols = T.gather_cols(picked, [1, 0])
            out = T.tsum(T.square(cols))
            T.backward(out)
            return out.item(), {"x": x.grad}

        rng = np.random.default_rng(8)
        report = grad_check(loss, {"x": rng.normal(size=(3, 3))})
        assert report.max_relative_error < 1e-8

    def test_layer_norm_gradient(self):
        def loss(params):
            x = T.leaf(params["x"])
            g = T.leaf(params["g"])
            b = T.leaf(params["b"])
            out = T.tsum(T.square(T.layer_norm_rows(x, g, b)))
            T.backward(out)
            return out.item(), {"x": x.grad, "g": g.grad, "b": b.grad}

        rng = np.random.default_rng(9)
        params = {"x": rng.normal(size=(4, 6)), "g": rng.uniform(0.5, 1.5, (1, 6)), "b": rng.normal(size=(1, 6))}
        report = grad_check(loss, params)
        assert report.max_relative_error < 1e-6

    def test_backward_requires_scalar(self):
        x = T.leaf(np.ones((2, 2)))
        with pytest.raises(DimensionError):
            T.backward(x)

    def test_deterministic_forward_backward(self):
        rng = np.random.default_rng(10)
        a_val, b_val = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))

        def run():
            a, b = T.leaf(a_val), T.leaf(b_val)
            out = T.tsum(T.square(T.matmul(a, b)))
            T.backward(out)
            return out.item(), a.grad.copy(), b.grad.copy()

        v1, g1a, g1b = run()
        v2, g2a, g2b = run()
        assert v1 == v2 and np.array_equal(g1a, g2a) and np.array_equal(g1b, g2b)
