import numpy as np
import pytest

from trendsearch import kernel
from trendsearch.errors import DomainError, NumericalError
from trendsearch.kernel import AdamState, LayerSpec, adam_step, composite_loss, he_init

from gradcheck import loss_gradient_error, relative_gradient_error

TOL = 1e-4


def rng_for(seed):
    return np.random.default_rng(seed)


class TestHeInit:
    def test_fan_in_two_gives_unit_std(self):
        draws = he_init((100_000,), fan_in=2, rng=rng_for(0))
        assert np.std(draws) == pytest.approx(1.0, rel=0.02)

    def test_fan_in_200(self):
        draws = he_init((100_000,), fan_in=200, rng=rng_for(1))
        assert np.std(draws) == pytest.approx(0.1, rel=0.02)

    def test_large_sample_std(self):
        draws = he_init((100_000,), fan_in=50, rng=rng_for(2))
        assert np.std(draws) == pytest.approx(np.sqrt(0.04), rel=0.02)

    def test_rejects_bad_fan_in(self):
        with pytest.raises(DomainError):
            he_init((3,), fan_in=0, rng=rng_for(0))

    def test_biases_start_at_zero(self):
        params = kernel.init_params(LayerSpec.dense(4, 3), rng_for(0))
        assert np.all(params["b"] == 0.0)
        params = kernel.init_params(LayerSpec.lstm(2, 5), rng_for(0))
        assert np.all(params["b"] == 0.0)


class TestForward:
    def test_relu(self):
        y, _ = kernel.layer_forward(LayerSpec.relu(), {}, np.array([[-1.0, 0.0, 2.0]]))
        assert y.tolist() == [[0.0, 0.0, 2.0]]

    def test_conv1d_hand_values(self):
        # input (1,2,3,4), kernel (1,1): valid cross-correlation -> (3, 5, 7)
        spec = LayerSpec.conv1d(1, 1, 2)
        params = {"w": np.ones((2, 1, 1)), "b": np.zeros(1)}
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1)
        y, _ = kernel.layer_forward(spec, params, x)
        assert y[0, :, 0].tolist() == [3.0, 5.0, 7.0]

    def test_max_pool(self):
        spec = LayerSpec.pool("max", 2)
        x = np.array([1.0, 3.0, 2.0, 5.0]).reshape(1, 4, 1)
        y, _ = kernel.layer_forward(spec, {}, x)
        assert y[0, :, 0].tolist() == [3.0, 5.0]

    def test_avg_pool_drops_trailing_remainder(self):
        spec = LayerSpec.pool("avg", 2)
        x = np.arange(5.0).reshape(1, 5, 1)
        y, _ = kernel.layer_forward(spec, {}, x)
        assert y[0, :, 0].tolist() == [0.5, 2.5]

    def test_dense_flattens_higher_rank_input(self):
        spec = LayerSpec.dense(6, 2)
        params = kernel.init_params(spec, rng_for(0))
        y, _ = kernel.layer_forward(spec, params, rng_for(1).normal(size=(3, 3, 2)))
        assert y.shape == (3, 2)

    def test_shape_mismatch_names_layer(self):
        spec = LayerSpec.dense(4, 2)
        params = kernel.init_params(spec, rng_for(0))
        with pytest.raises(DomainError, match="dense"):
            kernel.layer_forward(spec, params, np.zeros((2, 5)))

    def test_dropout_eval_is_identity(self):
        spec = LayerSpec.dropout(0.5)
        x = rng_for(3).normal(size=(4, 4))
        y, _ = kernel.layer_forward(spec, {}, x, mode="eval")
        assert np.array_equal(y, x)

    def test_dropout_expectation_preserved(self):
        # inverted dropout: E[output] == input, Monte-Carlo over 1e5 masks
        spec = LayerSpec.dropout(0.3)
        x = np.full((1, 4), 2.0)
        rng = rng_for(4)
        total = np.zeros_like(x)
        n = 100_000
        for _ in range(n):
            y, _ = kernel.layer_forward(spec, {}, x, mode="train", rng=rng)
            total += y
        assert np.all(np.abs(total / n - x) < 0.02 * np.abs(x) + 1e-9)

    def test_poisoned_input_is_hard_failure(self):
        spec = LayerSpec.dense(3, 2)
        params = kernel.init_params(spec, rng_for(0))
        x = np.array([[1.0, np.nan, 2.0]])
        with pytest.raises(NumericalError, match="dense"):
            kernel.layer_forward(spec, params, x)

    def test_lstm_state_in_changes_output_and_detaches(self):
        spec = LayerSpec.lstm(1, 3)
        params = kernel.init_params(spec, rng_for(5))
        x = rng_for(6).normal(size=(2, 4, 1))
        y0, c0 = kernel.layer_forward(spec, params, x)
        y1, c1 = kernel.layer_forward(spec, params, x, state_in=(np.ones(3), np.ones(3)))
        assert not np.allclose(y0, y1)
        assert c1["carry_out"][0].shape == (3,)


class TestGradients:
    """Finite-difference oracle across randomized small shapes."""

    def test_dense(self):
        for seed in range(6):
            rng = rng_for(seed)
            din, dout, b = rng.integers(1, 6), rng.integers(1, 5), rng.integers(1, 4)
            spec = LayerSpec.dense(int(din), int(dout))
            params = kernel.init_params(spec, rng)
            err = relative_gradient_error(spec, params, rng.normal(size=(int(b), int(din))))
            assert err <= TOL

    def test_conv1d(self):
        for seed in range(6):
            rng = rng_for(100 + seed)
            c, f, k = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
            length = int(rng.integers(k, k + 5))
            spec = LayerSpec.conv1d(c, f, k)
            params = kernel.init_params(spec, rng)
            err = relative_gradient_error(spec, params, rng.normal(size=(2, length, c)))
            assert err <= TOL

    def test_avg_pool(self):
        for seed in range(6):
            rng = rng_for(200 + seed)
            size = int(rng.integers(1, 4))
            length = int(rng.integers(size, size + 6))
            spec = LayerSpec.pool("avg", size)
            err = relative_gradient_error(spec, {}, rng.normal(size=(2, length, 2)))
            assert err <= TOL

    def test_max_pool_away_from_kinks(self):
        for seed in range(6):
            rng = rng_for(300 + seed)
            spec = LayerSpec.pool("max", 2)
            # well-separated values keep the argmax stable under perturbation
            x = rng.permuted(np.arange(24.0)).reshape(2, 6, 2)
            err = relative_gradient_error(spec, {}, x)
            assert err <= TOL

    def test_relu_away_from_kink(self):
        for seed in range(6):
            rng = rng_for(400 + seed)
            x = rng.normal(size=(3, 5))
            x[np.abs(x) < 0.05] = 0.5
            err = relative_gradient_error(LayerSpec.relu(), {}, x)
            assert err <= TOL

    def test_lstm(self):
        for seed in range(4):
            rng = rng_for(500 + seed)
            d, h = int(rng.integers(1, 3)), int(rng.integers(1, 4))
            spec = LayerSpec.lstm(d, h)
            params = kernel.init_params(spec, rng)
            x = rng.normal(size=(2, int(rng.integers(2, 5)), d))
            err = relative_gradient_error(spec, params, x)
            assert err <= TOL

    def test_lstm_with_carried_state(self):
        rng = rng_for(777)
        spec = LayerSpec.lstm(2, 3)
        params = kernel.init_params(spec, rng)
        state = (rng.normal(size=3) * 0.1, rng.normal(size=3) * 0.1)
        err = relative_gradient_error(spec, params, rng.normal(size=(2, 3, 2)), state_in=state)
        assert err <= TOL

    def test_dropout_mask_reused_in_backward(self):
        spec = LayerSpec.dropout(0.4)
        err = relative_gradient_error(spec, {}, rng_for(888).normal(size=(3, 6)))
        assert err <= TOL

    def test_composite_loss(self):
        for seed in range(6):
            rng = rng_for(600 + seed)
            pred = rng.normal(size=(int(rng.integers(1, 6)), 2))
            target = rng.normal(size=pred.shape)
            assert loss_gradient_error(pred, target) <= 1e-6


class TestCompositeLoss:
    def test_perfect_prediction(self):
        pred = np.array([[1.0, 2.0], [3.0, 4.0]])
        loss, grad = composite_loss(pred, pred.copy())
        assert loss.total == 0.0
        assert np.all(grad == 0.0)

    def test_hand_value(self):
        # one instance, slope error 3 and duration error 4 -> (9 + 16) / 2
        loss, _ = composite_loss(np.array([[3.0, 4.0]]), np.array([[0.0, 0.0]]))
        assert loss.total == pytest.approx(12.5, abs=1e-12)
        assert loss.slope_mse == pytest.approx(9.0, abs=1e-12)
        assert loss.duration_mse == pytest.approx(16.0, abs=1e-12)

    def test_total_is_exact_mean(self):
        rng = rng_for(1)
        loss, _ = composite_loss(rng.normal(size=(7, 2)), rng.normal(size=(7, 2)))
        assert loss.total == (loss.slope_mse + loss.duration_mse) / 2

    def test_empty_batch_rejected(self):
        with pytest.raises(DomainError):
            composite_loss(np.zeros((0, 2)), np.zeros((0, 2)))


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState()
        adam_step(params, {"w": np.zeros(2)}, state, lr=0.1)
        assert params["w"].tolist() == [1.0, -2.0]
        assert state.t == 1

    def test_first_step_closed_form(self):
        # scalar g=1: bias correction gives m_hat = 1, sqrt(v_hat) = 1
        params = {"w": np.array([0.0])}
        adam_step(params, {"w": np.array([1.0])}, AdamState(), lr=0.01)
        expected = -0.01 * 1.0 / (1.0 + 1e-8)
        assert params["w"][0] == pytest.approx(expected, abs=1e-15)

    def test_matches_scalar_recurrence(self):
        # independent hand-rolled recurrence, constant gradient
        g, lr, b1, b2, eps = 0.7, 0.05, 0.9, 0.999, 1e-8
        theta_hand, m, v = 0.3, 0.0, 0.0
        params = {"w": np.array([0.3])}
        state = AdamState()
        for t in range(1, 6):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta_hand -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            adam_step(params, {"w": np.array([g])}, state, lr=lr)
            assert params["w"][0] == pytest.approx(theta_hand, abs=1e-12)

    def test_weight_decay_is_coupled_l2(self):
        params = {"w": np.array([2.0])}
        ref = {"w": np.array([2.0])}
        adam_step(params, {"w": np.array([0.0])}, AdamState(), lr=0.01, weight_decay=0.5)
        # same update as passing the decayed gradient explicitly
        adam_step(ref, {"w": np.array([0.5 * 2.0])}, AdamState(), lr=0.01)
        assert params["w"][0] == pytest.approx(ref["w"][0], abs=1e-15)

    def test_non_finite_gradient_names_parameter(self):
        with pytest.raises(NumericalError, match="w"):
            adam_step({"w": np.zeros(1)}, {"w": np.array([np.nan])}, AdamState(), lr=0.1)
