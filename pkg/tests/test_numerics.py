import numpy as np
import pytest

from inpl.numerics import (
    MlpParams,
    NonFiniteError,
    Tensor,
    ema_update,
    grad,
    init_mlp,
    init_optimizer,
    logsumexp,
    mlp_forward,
    mlp_forward_tensor,
    optimizer_step,
    value_and_grad,
)
from inpl import losses

from .helpers import central_difference, relative_error


class TestLogsumexp:
    def test_two_zeros(self):
        np.testing.assert_allclose(logsumexp([0.0, 0.0]), np.log(2), rtol=0, atol=1e-15)

    def test_large_values_do_not_overflow(self):
        assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000 + np.log(2), abs=1e-12)

    def test_one_two_three(self):
        # oracle: 3 + log(1 + e^-1 + e^-2), evaluated with mpmath in the property tests
        assert logsumexp([1.0, 2.0, 3.0]) == pytest.approx(3.407606, abs=5e-7)

    def test_temperature_scales(self):
        v = np.array([0.3, -1.2, 2.0])
        assert logsumexp(v, T=2.0) == pytest.approx(2.0 * logsumexp(v / 2.0), abs=1e-14)

    def test_batched_rows(self):
        v = np.array([[0.0, 0.0], [1.0, 2.0]])
        np.testing.assert_allclose(logsumexp(v), [np.log(2), 2 + np.log1p(np.exp(-1))])

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            logsumexp(np.zeros(0))

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            logsumexp([1.0, 2.0], T=0.0)


class TestForward:
    def test_zero_params_give_zero_logits(self):
        p = MlpParams([(np.zeros((3, 4)), np.zeros(4)), (np.zeros((4, 2)), np.zeros(2))])
        np.testing.assert_array_equal(mlp_forward(p, np.ones((5, 3))), np.zeros((5, 2)))

    def test_single_linear_layer(self):
        p = MlpParams([(np.array([[2.0, 0.0], [0.0, 3.0]]), np.zeros(2))])
        np.testing.assert_array_equal(mlp_forward(p, np.array([1.0, 1.0])), [[2.0, 3.0]])

    def test_output_shape(self):
        p = init_mlp([4, 8, 8, 6], np.random.default_rng(0))
        assert mlp_forward(p, np.zeros((7, 4))).shape == (7, 6)

    def test_width_mismatch(self):
        p = init_mlp([4, 8, 3], np.random.default_rng(0))
        with pytest.raises(ValueError):
            mlp_forward(p, np.zeros((2, 5)))

    def test_tensor_forward_matches_numpy(self):
        rng = np.random.default_rng(1)
        p = init_mlp([3, 5, 5, 4], rng)
        x = rng.normal(size=(6, 3))
        t = mlp_forward_tensor([Tensor(a) for a in p.arrays()], x)
        np.testing.assert_allclose(t.data, mlp_forward(p, x), rtol=0, atol=1e-14)

    def test_mismatched_layers_rejected(self):
        with pytest.raises(ValueError):
            MlpParams([(np.zeros((3, 4)), np.zeros(4)), (np.zeros((5, 2)), np.zeros(2))])


class TestGradients:
    def test_half_square_norm(self):
        theta = [np.array([1.0, -2.0, 3.0]), np.array([[0.5]])]
        g = grad(lambda w: sum(((t * t).sum() for t in w), Tensor(0.0)) * 0.5, theta)
        for a, b in zip(g, theta):
            np.testing.assert_array_equal(a, b)

    def test_constant_loss_has_zero_gradient(self):
        theta = [np.ones(3), np.ones((2, 2))]
        g = grad(lambda w: Tensor(4.0), theta)
        for a in g:
            np.testing.assert_array_equal(a, 0.0)

    def test_mlp_cross_entropy_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        p = init_mlp([3, 6, 6, 4], rng)
        x = rng.normal(size=(8, 3))
        y = rng.integers(0, 4, size=8)

        def f(arrays):
            w = [Tensor(a) for a in arrays] if not isinstance(arrays[0], Tensor) else arrays
            return losses.supervised_loss(mlp_forward_tensor(w, x), y)

        _, g = value_and_grad(f, p)
        numeric = central_difference(lambda arrs: float(f(arrs).data), p.arrays())
        assert relative_error(g.arrays(), numeric) <= 1e-5

    def test_non_finite_loss_raises(self):
        with pytest.raises(NonFiniteError):
            value_and_grad(lambda w: (w[0] * np.inf).sum(), [np.ones(2)])

    def test_gradients_returned_as_params(self):
        p = init_mlp([2, 3, 2], np.random.default_rng(0))
        _, g = value_and_grad(lambda w: mlp_forward_tensor(w, np.ones((1, 2))).sum(), p)
        assert isinstance(g, MlpParams)
        assert [a.shape for a in g.arrays()] == [a.shape for a in p.arrays()]


class TestOptimizers:
    def test_sgd_plain_step(self):
        st = init_optimizer([np.array([1.0])], "sgd", lr=0.1, momentum=0.0)
        new, st = optimizer_step(st, [np.array([1.0])], [np.array([1.0])])
        np.testing.assert_allclose(new[0], [0.9], rtol=0, atol=1e-15)
        assert st.step == 1

    @pytest.mark.parametrize("kind", ["sgd", "adam"])
    def test_zero_gradient_keeps_params(self, kind):
        theta = [np.array([1.0, -2.0]), np.array([[3.0]])]
        st = init_optimizer(theta, kind)
        new, _ = optimizer_step(st, theta, [np.zeros(2), np.zeros((1, 1))])
        for a, b in zip(new, theta):
            np.testing.assert_array_equal(a, b)

    def test_adam_first_step_moves_by_lr(self):
        # first bias-corrected step is m/sqrt(v) = g/|g| = 1, so |update| = lr * c/(c + eps)
        lr, c, eps = 1e-3, 0.7, 1e-8
        st = init_optimizer([np.zeros(3)], "adam", lr=lr, eps=eps)
        new, _ = optimizer_step(st, [np.zeros(3)], [np.full(3, c)])
        np.testing.assert_allclose(new[0], -lr * c / (c + eps), rtol=1e-12)

    def test_sgd_momentum_accumulates(self):
        st = init_optimizer([np.zeros(1)], "sgd", lr=1.0, momentum=0.5)
        p = [np.zeros(1)]
        p, st = optimizer_step(st, p, [np.ones(1)])
        p, st = optimizer_step(st, p, [np.ones(1)])
        # v1 = 1, v2 = 0.5 + 1
        np.testing.assert_allclose(p[0], [-2.5])

    def test_inputs_not_mutated(self):
        theta = [np.array([1.0])]
        st = init_optimizer(theta, "sgd", lr=0.1)
        optimizer_step(st, theta, [np.array([1.0])])
        np.testing.assert_array_equal(theta[0], [1.0])
        np.testing.assert_array_equal(st.buffers[0][0], [0.0])

    def test_shape_mismatch(self):
        st = init_optimizer([np.zeros(2)], "sgd")
        with pytest.raises(ValueError):
            optimizer_step(st, [np.zeros(2)], [np.zeros(3)])

    def test_non_finite_gradient(self):
        st = init_optimizer([np.zeros(2)], "sgd")
        with pytest.raises(NonFiniteError):
            optimizer_step(st, [np.zeros(2)], [np.array([np.nan, 0.0])])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            init_optimizer([np.zeros(2)], "rmsprop")


class TestEma:
    def test_single_step(self):
        assert ema_update(1.0, 0.0, 0.999) == pytest.approx(0.999, abs=1e-15)

    def test_fixed_point(self):
        a = np.array([0.3, -1.0])
        np.testing.assert_array_equal(ema_update(a, a.copy(), 0.9), a)

    def test_geometric_closed_form(self):
        a, c, m, n = 2.0, -0.5, 0.999, 500
        avg = np.array(a)
        for _ in range(n):
            avg = ema_update(avg, np.array(c), m)
        assert abs(avg - (c + m**n * (a - c))) <= 1e-12

    def test_momentum_range(self):
        with pytest.raises(ValueError):
            ema_update(1.0, 0.0, 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ema_update(np.zeros(2), np.zeros(3), 0.5)

    def test_on_params(self):
        rng = np.random.default_rng(0)
        a, b = init_mlp([2, 3, 2], rng), init_mlp([2, 3, 2], rng)
        out = ema_update(a, b, 0.25)
        for o, x, y in zip(out.arrays(), a.arrays(), b.arrays()):
            np.testing.assert_allclose(o, 0.25 * x + 0.75 * y)
