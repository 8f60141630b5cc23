"""
Tests for Network Service
"""

import math

import numpy as np
import pytest

from models.network_models import ActivationKind, ActivationSpec, ActivationVariant, variant_activations
from models.training_models import AdamConfig, DpConfig, TrainConfig
from services.data_pipeline import split, standardize, synthesize
from services.metrics import auc
from services.network import (
    DimensionError, DivergenceError, MlpModel, ModelError, batch_gradient, forward, forward_batch, gradient_norms,
    init_model, load_model, model_from_text, model_to_text, per_example_gradients, predict_scores,
    save_model, train, weighted_mse,
)

SQUARE = ActivationSpec(kind=ActivationKind.SQUARE)


@pytest.fixture
def small_model():
    """Random 3 -> 4 -> 1 network with quantized swish and non-zero biases"""
    model = init_model(3, 4, seed=1)
    rng = np.random.default_rng(2)
    return model.with_parameters(model.flat_parameters() + rng.normal(scale=0.3, size=model.parameter_count))


@pytest.fixture
def separable():
    """Two features in [0, 1], label x0 + x1 > 1, with a margin around the boundary"""
    rng = np.random.default_rng(4)
    x = rng.random((600, 2))
    margin = np.abs(x.sum(axis=1) - 1.0) > 0.1
    x = x[margin][:300]
    return x, (x.sum(axis=1) > 1.0).astype(float)


def example_loss(model, params, x, y, w_pos):
    score, _ = forward(model.with_parameters(params), x)
    return weighted_mse(score, y, w_pos)


class TestForward:
    """Test cases for the forward pass"""

    def test_unit_square_network(self):
        """Test 1x1x1 network with W = 1, b = 0, square activations at x = 2 gives 16"""
        model = MlpModel(w1=[[1.0]], b1=[0.0], w2=[1.0], b2=0.0, hidden=SQUARE, output=SQUARE)
        score, cache = forward(model, np.array([2.0]))
        assert score == 16.0
        assert cache.a1.tolist() == [[4.0]]

    def test_straight_line_recomputation(self, small_model, rng):
        """Test forward against an explicit loop"""
        x = rng.random(3)
        coefficients = small_model.hidden.real_coefficients()
        poly = lambda z: sum(c * z ** k for k, c in enumerate(coefficients))
        hidden = [poly(sum(x[i] * small_model.w1[i, j] for i in range(3)) + small_model.b1[j]) for j in range(4)]
        expected = poly(sum(h * w for h, w in zip(hidden, small_model.w2)) + small_model.b2)
        assert forward(small_model, x)[0] == pytest.approx(expected, abs=1e-12)

    def test_batch_matches_single(self, small_model, rng):
        """Test batched scores agree with one-at-a-time scoring"""
        x = rng.random((7, 3))
        single = [forward(small_model, row)[0] for row in x]
        assert np.allclose(predict_scores(small_model, x, batch_size=3), single)

    def test_wrong_dimension(self, small_model):
        """Test that a mis-sized feature vector is rejected"""
        with pytest.raises(DimensionError):
            forward(small_model, np.zeros(5))

    def test_relu_sigmoid_range(self, rng):
        """Test the float baseline produces probabilities"""
        model = init_model(3, 4, activations=variant_activations(ActivationVariant.RELU_SIGMOID), seed=0)
        scores = forward_batch(model, rng.random((10, 3))).score
        assert np.all((scores > 0) & (scores < 1))


class TestLoss:
    """Test cases for weighted MSE"""

    def test_perfect(self):
        """Test score == label gives 0"""
        assert weighted_mse(1.0, 1.0) == 0.0

    def test_positive_weight(self):
        """Test label 1, score 0, w_pos 8 gives 8"""
        assert weighted_mse(0.0, 1.0, 8.0) == 8.0

    def test_negative_weight(self):
        """Test label 0, score 1 gives 1"""
        assert weighted_mse(1.0, 0.0, 8.0) == 1.0


class TestGradients:
    """Test cases for analytic per-example gradients"""

    def test_finite_differences(self, small_model, rng):
        """Test every coordinate against central differences with h = 1e-5"""
        x = rng.random((4, 3))
        y = np.array([0.0, 1.0, 1.0, 0.0])
        gradients, _ = per_example_gradients(small_model, x, y, 8.0)
        params = small_model.flat_parameters()
        h = 1e-5
        for b in range(4):
            numeric = np.empty_like(params)
            for k in range(params.size):
                up, down = params.copy(), params.copy()
                up[k] += h
                down[k] -= h
                numeric[k] = (example_loss(small_model, up, x[b], y[b], 8.0)
                              - example_loss(small_model, down, x[b], y[b], 8.0)) / (2 * h)
            assert np.allclose(gradients[b], numeric, rtol=1e-4, atol=1e-7)

    def test_zero_loss_example(self):
        """Test an exactly fitted example has zero gradient"""
        model = MlpModel(w1=[[1.0]], b1=[0.0], w2=[1.0], b2=0.0, hidden=SQUARE, output=SQUARE)
        gradients, losses = per_example_gradients(model, np.array([[1.0]]), np.array([1.0]))
        assert losses.tolist() == [0.0]
        assert not gradients.any()

    def test_sum_matches_batch(self, small_model, rng):
        """Test summed per-example gradients equal B times the mean-loss gradient"""
        x = rng.random((9, 3))
        y = (rng.random(9) < 0.3).astype(float)
        gradients, _ = per_example_gradients(small_model, x, y)
        assert np.allclose(gradients.sum(axis=0), 9 * batch_gradient(small_model, x, y))

    def test_no_bias(self, rng):
        """Test bias gradients vanish without bias terms"""
        model = init_model(3, 4, seed=0, use_bias=False)
        gradients, _ = per_example_gradients(model, rng.random((5, 3)), np.ones(5))
        assert not gradients[:, 12:16].any()
        assert not gradients[:, -1].any()


class TestModelFile:
    """Test cases for the text model format"""

    def test_roundtrip(self, small_model, tmp_path):
        """Test save then load reproduces weights and activations exactly"""
        path = tmp_path / "model.txt"
        save_model(small_model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.flat_parameters(), small_model.flat_parameters())
        assert loaded.hidden == small_model.hidden
        assert loaded.output == small_model.output

    def test_text_mentions_activation(self, small_model):
        """Test the activation is written as signed base-2 terms"""
        assert "hidden_activation=base2:1:-4,1:-1,1:-3" in model_to_text(small_model)

    def test_wrong_format(self):
        """Test that other files are refused"""
        with pytest.raises(ModelError):
            model_from_text("format=something-else\nversion=1\n")

    def test_truncated(self, small_model):
        """Test that a missing key is a model error"""
        text = "\n".join(line for line in model_to_text(small_model).splitlines() if not line.startswith("w2="))
        with pytest.raises(ModelError):
            model_from_text(text)


class TestTraining:
    """Test cases for plain and private training"""

    def test_separable_accuracy(self, separable):
        """Test a linearly separable toy set reaches 95% training accuracy"""
        x, y = separable
        config = TrainConfig(batch_size=32, epochs=200, positive_weight=1.0, hidden_units=16,
                             activation="relu-sigmoid", optimizer=AdamConfig(learning_rate=0.02))
        model, history = train(x, y, config)
        accuracy = np.mean((predict_scores(model, x) >= 0.5) == (y == 1))
        assert accuracy >= 0.95
        assert history.epoch_losses[-1] < history.epoch_losses[0]

    def test_reproducible(self, separable):
        """Test a fixed seed gives identical parameters"""
        x, y = separable
        config = TrainConfig(batch_size=50, epochs=3, seed=7)
        first, _ = train(x, y, config)
        second, _ = train(x, y, config)
        assert np.array_equal(first.flat_parameters(), second.flat_parameters())

    def test_scanned_swish_exponents(self, separable):
        """Test a scanned base-2 tuple replaces the reference quantized swish"""
        x, y = separable
        config = TrainConfig(batch_size=50, epochs=1, seed=7, swish_exponents=[-3, -1, -3])
        model, _ = train(x, y, config)
        assert model.hidden.exponents == [-3, -1, -3]
        assert model.output.exponents == [-3, -1, -3]
        assert variant_activations(ActivationVariant.SWISH_QUANT)[0].exponents == [-4, -1, -3]

    def test_swish_exponents_need_swish_quant(self):
        """Test exponent overrides are refused for other variants"""
        with pytest.raises(ValueError):
            TrainConfig(activation="square", swish_exponents=[-3, -1, -3])

    def test_private_reproducible(self, separable):
        """Test a fixed seed gives identical private trajectories"""
        x, y = separable
        dp = DpConfig(lot_size=50, dataset_size=len(x), noise_multiplier=2.0, delta=1e-5)
        config = TrainConfig(batch_size=50, epochs=2, seed=3, dp=dp)
        first, h1 = train(x, y, config)
        second, h2 = train(x, y, config)
        assert np.array_equal(first.flat_parameters(), second.flat_parameters())
        assert h1.epsilon == h2.epsilon > 0

    def test_zero_budget_returns_initial_model(self, separable):
        """Test epsilon budget 0 leaves the initial model untouched"""
        x, y = separable
        dp = DpConfig(lot_size=50, dataset_size=len(x), epsilon_budget=0.0)
        config = TrainConfig(batch_size=50, epochs=5, seed=11, dp=dp)
        model, history = train(x, y, config)
        initial = init_model(2, 32, seed=11)
        assert np.array_equal(model.flat_parameters(), initial.flat_parameters())
        assert history.stopped_early
        assert history.steps == 0

    def test_budget_stops_cleanly(self, separable):
        """Test a tight budget ends training early without exceeding it"""
        x, y = separable
        dp = DpConfig(lot_size=50, dataset_size=len(x), noise_multiplier=0.8, epsilon_budget=1.0, delta=1e-5)
        config = TrainConfig(batch_size=50, epochs=100, dp=dp)
        _, history = train(x, y, config)
        assert history.stopped_early
        assert history.epsilon <= 1.0
        assert all(r.epsilon <= 1.0 for r in history.records)

    def test_training_log(self, separable, tmp_path):
        """Test the JSON-lines log has one record per step"""
        x, y = separable
        path = tmp_path / "log.jsonl"
        config = TrainConfig(batch_size=100, epochs=2, log_path=str(path))
        _, history = train(x, y, config)
        assert len(path.read_text().splitlines()) == history.steps == 6

    def test_divergence(self, separable):
        """Test non-finite loss aborts with diagnostics"""
        x, y = separable
        start = MlpModel(w1=np.full((2, 4), 1e80), b1=np.zeros(4), w2=np.full(4, 1e80), b2=0.0,
                         hidden=SQUARE, output=SQUARE)
        with np.errstate(all="ignore"):
            with pytest.raises(DivergenceError):
                train(x, y, TrainConfig(batch_size=50, epochs=1), model=start)

    def test_batch_larger_than_dataset(self, separable):
        """Test a batch larger than N is rejected"""
        x, y = separable
        with pytest.raises(ModelError):
            train(x[:10], y[:10], TrainConfig(batch_size=50, epochs=1))


class TestFeatureScaling:
    """Test cases for the gradient-norm experiment on synthetic data"""

    def test_standardization_shrinks_gradients(self):
        """Test min-max scaling cuts the median per-example gradient norm at least fourfold"""
        raw = synthesize(1000, 12, seed=1, raw_scale=100.0)
        scaled, _ = standardize(raw)
        norms = []
        for dataset in (raw, scaled):
            model = init_model(dataset.dimension, 32, seed=0)
            with np.errstate(over="ignore", invalid="ignore"):
                norms.append(np.median(gradient_norms(model, dataset.features, dataset.labels)))
        assert norms[0] >= 4 * norms[1]


@pytest.mark.slow
class TestPrivateUtility:
    """Private training against the non-private baseline on planted data"""

    def test_auc_gap(self, planted_dataset):
        """Test DP training at moderate noise loses at most 0.05 AUC"""
        train_set, test_set = split(planted_dataset, seed=0)
        base = dict(batch_size=100, epochs=30, positive_weight=8.0, seed=2,
                    optimizer=AdamConfig(learning_rate=0.01))
        plain, _ = train(train_set.features, train_set.labels, TrainConfig(**base))
        dp = DpConfig(lot_size=100, dataset_size=len(train_set), noise_multiplier=1.1, delta=1e-5)
        private, history = train(train_set.features, train_set.labels, TrainConfig(dp=dp, **base))
        plain_auc = auc(predict_scores(plain, test_set.features), test_set.labels)
        private_auc = auc(predict_scores(private, test_set.features), test_set.labels)
        assert plain_auc >= 0.75
        assert private_auc >= plain_auc - 0.05
        assert math.isfinite(history.epsilon)


if __name__ == "__main__":
    pytest.main([__file__])
