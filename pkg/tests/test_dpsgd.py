"""
Tests for DP-SGD Service
"""

import math
from dataclasses import dataclass

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate, stats

from models.training_models import AdamConfig, DpConfig, SamplingMode, TrainStepRecord
from services.dpsgd import (
    AdamState, BudgetConfigurationError, BudgetExhausted, PrivacyAccountant, StepOutcome,
    accountant_epsilon, accountant_update, adam_update, clip, clip_rows, clipped_sum,
    compute_epsilon, epsilon_sweep, noise_multiplier_for_epsilon, private_step,
    read_training_log, sample_lot, sanitize, single_step_log_moment, write_training_log,
)

LOT_RATE = 256 / 75000
EPOCH_STEPS = 75000 // 256
ORACLE_ORDERS = (1.5, 2.0, 3.5, 8.0, 32.0)


def quadrature_log_moment(q, sigma, alpha):
    """log of the integral of N(0,s^2)(z) * ((1-q) + q*exp((2z-1)/(2s^2)))^alpha"""
    def integrand(z):
        log_ratio = np.logaddexp(math.log(1 - q), math.log(q) + (2 * z - 1) / (2 * sigma ** 2))
        return math.exp(stats.norm.logpdf(z, scale=sigma) + alpha * log_ratio)
    value, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=0, epsrel=1e-12, limit=500)
    return math.log(value)


@dataclass(frozen=True)
class LinearModel:
    """Least-squares stub exposing the flat-parameter protocol"""
    weights: np.ndarray

    def flat_parameters(self):
        return self.weights.copy()

    def with_parameters(self, vector):
        return LinearModel(np.asarray(vector, dtype=float))


def linear_gradients(model, x, y):
    residual = x @ model.weights - y
    return 2 * residual[:, None] * x, residual ** 2


@pytest.fixture
def lot():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(8, 4))
    y = x @ np.array([1.0, -2.0, 0.5, 0.0]) + 0.1 * rng.normal(size=8)
    return x, y


class TestClip:
    """Test cases for per-example clipping"""

    def test_within_bound(self):
        """Test ||g|| = 0.5 with C = 1 is unchanged"""
        g = np.array([0.3, 0.4])
        assert np.array_equal(clip(g, 1.0), g)

    def test_scaled_to_bound(self):
        """Test (3, 4) with C = 1 becomes (0.6, 0.8)"""
        assert np.allclose(clip(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])

    def test_boundary(self):
        """Test ||g|| == C exactly is unchanged"""
        g = np.array([3.0, 4.0])
        assert np.array_equal(clip(g, 5.0), g)

    def test_infinite_bound(self):
        """Test C = inf disables clipping"""
        g = np.array([1e6, -1e6])
        assert np.array_equal(clip(g, math.inf), g)

    def test_invalid_bound(self):
        """Test C <= 0 is rejected"""
        with pytest.raises(BudgetConfigurationError):
            clip(np.ones(2), 0.0)

    def test_rows_match_single(self, rng):
        """Test row-wise clipping equals clipping each row"""
        gradients = rng.normal(scale=3.0, size=(20, 6))
        expected = np.stack([clip(g, 1.5) for g in gradients])
        assert np.allclose(clip_rows(gradients, 1.5), expected)
        assert np.all(np.linalg.norm(clip_rows(gradients, 1.5), axis=1) <= 1.5 + 1e-12)

    def test_bounded_sensitivity(self, rng):
        """Test neighbouring lots differ by at most C in pre-noise aggregate"""
        for _ in range(50):
            gradients = rng.normal(scale=5.0, size=(16, 10))
            neighbour = gradients.copy()
            neighbour[int(rng.integers(16))] = rng.normal(scale=50.0, size=10)
            gap = np.linalg.norm(clipped_sum(gradients, 1.0) - clipped_sum(neighbour, 1.0))
            assert gap <= 2.0 + 1e-9
            removed = np.delete(gradients, int(rng.integers(16)), axis=0)
            assert np.linalg.norm(clipped_sum(gradients, 1.0) - clipped_sum(removed, 1.0)) <= 1.0 + 1e-9


class TestSanitize:
    """Test cases for the Gaussian mechanism"""

    def test_noiseless_mean(self, rng):
        """Test sigma = 0 returns the sum over L"""
        clipped = clip_rows(rng.normal(size=(4, 3)), 1.0)
        assert np.allclose(sanitize(clipped, 0.0, 1.0, 4, rng), clipped.mean(axis=0))

    def test_single_gradient(self, rng):
        """Test one in-bound gradient with sigma = 0 and L = 1 comes back unchanged"""
        g = np.array([[0.1, -0.2]])
        assert np.allclose(sanitize(g, 0.0, 1.0, 1, rng), g[0])

    def test_noise_scale(self):
        """Test empirical per-coordinate std is sigma*C/L within 5%"""
        rng = np.random.default_rng(0)
        draws = np.stack([sanitize(np.zeros((1, 5)), 1.5, 2.0, 4, rng) for _ in range(10_000)])
        assert np.allclose(draws.std(axis=0), 1.5 * 2.0 / 4, rtol=0.05)

    def test_infinite_clip_with_noise(self, rng):
        """Test noise with an unbounded clip is refused"""
        with pytest.raises(BudgetConfigurationError):
            sanitize(np.zeros((1, 2)), 1.0, math.inf, 1, rng)


class TestAccountant:
    """Test cases for the log-moment accountant"""

    @pytest.mark.parametrize("alpha", ORACLE_ORDERS)
    def test_single_step_against_quadrature(self, alpha):
        """Test single-step log-moments against numerical integration within 0.5%"""
        expected = quadrature_log_moment(LOT_RATE, 4.0, alpha)
        assert single_step_log_moment(LOT_RATE, 4.0, alpha) == pytest.approx(expected, rel=5e-3)

    def test_larger_rate_against_quadrature(self):
        """Test a heavier sampling rate and smaller sigma"""
        for alpha in (2.0, 2.5, 6.0):
            expected = quadrature_log_moment(0.05, 1.1, alpha)
            assert single_step_log_moment(0.05, 1.1, alpha) == pytest.approx(expected, rel=5e-3)

    def test_zero_steps(self):
        """Test no updates gives epsilon 0"""
        assert accountant_epsilon(PrivacyAccountant(), 1e-5) == 0.0

    def test_additivity(self):
        """Test T steps equal T times the single-step log-moments"""
        acct = accountant_update(PrivacyAccountant(), LOT_RATE, 4.0, steps=10)
        single = accountant_update(PrivacyAccountant(), LOT_RATE, 4.0)
        assert np.allclose(acct.log_moments, [10 * m for m in single.log_moments])
        stepped = PrivacyAccountant()
        for _ in range(10):
            stepped = accountant_update(stepped, LOT_RATE, 4.0)
        assert np.allclose(stepped.log_moments, acct.log_moments)
        assert stepped.steps == 10

    def test_epoch_epsilon_against_quadrature(self):
        """Test one epoch at q = 256/75000, sigma = 4, delta = 1e-5 within 1%"""
        log_inv_delta = math.log(1e5)
        orders = (1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0)
        expected = min(
            (EPOCH_STEPS * quadrature_log_moment(LOT_RATE, 4.0, a) + log_inv_delta) / (a - 1)
            for a in orders
        )
        assert compute_epsilon(LOT_RATE, 4.0, EPOCH_STEPS, 1e-5, orders) == pytest.approx(expected, rel=0.01)

    def test_monotone_in_steps(self):
        """Test epsilon strictly grows with T"""
        values = [compute_epsilon(LOT_RATE, 4.0, t, 1e-5) for t in (1, 10, 100, 1000, 10000)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_monotone_in_sampling_rate(self):
        """Test epsilon strictly grows with the sampling rate q"""
        values = [compute_epsilon(q, 4.0, 500, 1e-5) for q in (0.001, 0.004, 0.01, 0.05, 0.2)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_monotone_in_delta(self):
        """Test a looser delta never costs more epsilon"""
        values = [compute_epsilon(LOT_RATE, 4.0, 500, d) for d in (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert values[0] > values[-1]

    def test_monotone_in_sigma(self):
        """Test larger sigma gives smaller epsilon"""
        assert compute_epsilon(LOT_RATE, 8.0, 500, 1e-5) < compute_epsilon(LOT_RATE, 4.0, 500, 1e-5)

    def test_zero_sigma(self):
        """Test sigma = 0 reports infinite epsilon"""
        acct = accountant_update(PrivacyAccountant(), LOT_RATE, 0.0)
        assert accountant_epsilon(acct, 1e-5) == math.inf

    def test_full_batch(self):
        """Test q = 1 reduces to the plain Gaussian moment alpha(alpha-1)/(2 sigma^2)"""
        assert single_step_log_moment(1.0, 2.0, 3.0) == pytest.approx(3 * 2 / 8)

    def test_invalid_delta(self):
        """Test delta outside (0, 1) is rejected"""
        acct = accountant_update(PrivacyAccountant(), LOT_RATE, 4.0)
        with pytest.raises(BudgetConfigurationError):
            accountant_epsilon(acct, 0.0)


class TestNoiseSearch:
    """Test cases for the sigma bisection"""

    def test_reaches_target(self):
        """Test the returned sigma meets the target and is nearly tight"""
        steps = 5 * EPOCH_STEPS
        sigma = noise_multiplier_for_epsilon(4.0, LOT_RATE, steps, 1e-5)
        assert compute_epsilon(LOT_RATE, sigma, steps, 1e-5) <= 4.0
        assert compute_epsilon(LOT_RATE, sigma * 0.98, steps, 1e-5) > 4.0

    def test_sweep_ordering(self):
        """Test smaller epsilon targets need more noise"""
        sweep = epsilon_sweep(LOT_RATE, EPOCH_STEPS, 1e-5)
        assert sweep[1.0] > sweep[4.0] > sweep[8.0]

    def test_non_positive_target(self):
        """Test epsilon <= 0 is rejected"""
        with pytest.raises(BudgetConfigurationError):
            noise_multiplier_for_epsilon(0.0, LOT_RATE, 10, 1e-5)


class TestAdam:
    """Test cases for the optimizer"""

    def test_first_step_moves_by_rate(self):
        """Test the bias-corrected first step moves each coordinate by about the learning rate"""
        params = np.array([1.0, -1.0, 0.5])
        grad = np.array([0.2, -3.0, 1e-3])
        updated, state = adam_update(params, grad, AdamState.zeros(3), AdamConfig(learning_rate=0.01))
        assert np.allclose(updated, params - 0.01 * np.sign(grad), atol=1e-6)
        assert state.t == 1

    def test_decay(self):
        """Test eta_t = lr / (1 + decay * t)"""
        assert AdamConfig(learning_rate=0.1, decay=0.5).rate_at(2) == pytest.approx(0.05)


class TestLots:
    """Test cases for lot sampling"""

    def test_fixed_lot(self, rng):
        """Test fixed lots have exactly L distinct sorted indices"""
        config = DpConfig(lot_size=32, dataset_size=1000)
        indices = sample_lot(rng, 1000, config)
        assert len(indices) == 32
        assert len(set(indices.tolist())) == 32
        assert np.all(np.diff(indices) > 0)

    def test_poisson_lot(self):
        """Test Poisson lots average L"""
        rng = np.random.default_rng(1)
        config = DpConfig(lot_size=50, dataset_size=1000, sampling=SamplingMode.POISSON)
        sizes = [len(sample_lot(rng, 1000, config)) for _ in range(400)]
        assert np.mean(sizes) == pytest.approx(50, rel=0.05)

    def test_lot_larger_than_dataset(self):
        """Test L > N is a validation error"""
        with pytest.raises(ValidationError):
            DpConfig(lot_size=20, dataset_size=10)

    def test_default_delta(self):
        """Test delta defaults to 1/N"""
        assert DpConfig(dataset_size=50_000).target_delta == pytest.approx(2e-5)


class TestPrivateStep:
    """Test cases for one private optimizer step"""

    def test_degenerate_config_is_plain_adam(self, lot, rng):
        """Test sigma = 0, C = inf reproduces an ordinary Adam step on the mean gradient"""
        x, y = lot
        model = LinearModel(np.zeros(4))
        config = DpConfig(clip_bound=math.inf, noise_multiplier=0.0, lot_size=8, dataset_size=100)
        adam = AdamConfig(learning_rate=0.05)
        outcome = private_step(model, x, y, config, AdamState.zeros(4), PrivacyAccountant(),
                               rng, linear_gradients, adam)
        assert isinstance(outcome, StepOutcome)
        gradients, _ = linear_gradients(model, x, y)
        expected, _ = adam_update(model.weights, gradients.mean(axis=0), AdamState.zeros(4), adam)
        assert np.allclose(outcome.model.weights, expected)

    def test_zero_budget_stops_first(self, lot, rng):
        """Test epsilon budget 0 stops before the first step"""
        x, y = lot
        config = DpConfig(lot_size=8, dataset_size=100, epsilon_budget=0.0)
        signal = private_step(LinearModel(np.zeros(4)), x, y, config, AdamState.zeros(4),
                              PrivacyAccountant(), rng, linear_gradients, AdamConfig())
        assert isinstance(signal, BudgetExhausted)
        assert signal.epsilon == 0.0
        assert signal.accountant.steps == 0

    def test_budget_exhaustion_is_clean(self, lot):
        """Test repeated steps end with a stop signal, never exceeding the budget"""
        x, y = lot
        config = DpConfig(lot_size=8, dataset_size=100, noise_multiplier=1.0, epsilon_budget=2.0, delta=1e-5)
        rng = np.random.default_rng(0)
        model, state, acct = LinearModel(np.zeros(4)), AdamState.zeros(4), PrivacyAccountant()
        for _ in range(10_000):
            outcome = private_step(model, x, y, config, state, acct, rng, linear_gradients, AdamConfig())
            if isinstance(outcome, BudgetExhausted):
                break
            assert outcome.epsilon <= 2.0
            model, state, acct = outcome.model, outcome.optimizer, outcome.accountant
        assert isinstance(outcome, BudgetExhausted)
        assert outcome.prospective_epsilon > 2.0 >= outcome.epsilon

    def test_accountant_advances_once(self, lot, rng):
        """Test each step composes exactly one mechanism"""
        x, y = lot
        config = DpConfig(lot_size=8, dataset_size=100)
        outcome = private_step(LinearModel(np.zeros(4)), x, y, config, AdamState.zeros(4),
                               PrivacyAccountant(), rng, linear_gradients, AdamConfig())
        assert outcome.accountant.steps == 1
        assert outcome.epsilon == pytest.approx(compute_epsilon(0.08, 4.0, 1, 0.01))
        assert len(outcome.grad_norms) == 8

    def test_determinism(self, lot):
        """Test identical seeds give bit-identical trajectories"""
        x, y = lot
        config = DpConfig(lot_size=8, dataset_size=100, noise_multiplier=1.0)

        def run():
            rng = np.random.default_rng(99)
            model, state, acct = LinearModel(np.zeros(4)), AdamState.zeros(4), PrivacyAccountant()
            trajectory = []
            for _ in range(5):
                outcome = private_step(model, x, y, config, state, acct, rng, linear_gradients, AdamConfig())
                model, state, acct = outcome.model, outcome.optimizer, outcome.accountant
                trajectory.append(model.weights)
            return np.stack(trajectory)

        assert np.array_equal(run(), run())

    def test_empty_poisson_lot(self, rng):
        """Test an empty lot still spends budget and applies pure noise"""
        config = DpConfig(lot_size=8, dataset_size=100, sampling=SamplingMode.POISSON)
        outcome = private_step(LinearModel(np.zeros(4)), np.zeros((0, 4)), np.zeros(0), config,
                               AdamState.zeros(4), PrivacyAccountant(), rng, linear_gradients, AdamConfig())
        assert outcome.accountant.steps == 1
        assert outcome.loss == 0.0


class TestTrainingLog:
    """Test cases for the JSON-lines training log"""

    def test_roundtrip(self, tmp_path):
        """Test records written are read back unchanged"""
        records = [
            TrainStepRecord(step=i, epoch=0, loss=0.5 / (i + 1), epsilon=0.1 * i,
                            grad_norm_median=1.0, lot_size=8)
            for i in range(3)
        ]
        path = tmp_path / "train.jsonl"
        write_training_log(records, path)
        assert read_training_log(path) == records
        assert len(path.read_text().splitlines()) == 3


if __name__ == "__main__":
    pytest.main([__file__])
