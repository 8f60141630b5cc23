"""
DP-SGD Service
Per-example clipping, Gaussian sanitization, Renyi log-moment accounting and private Adam steps
"""

import functools
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special

from models.training_models import DEFAULT_ORDERS, AdamConfig, DpConfig, SamplingMode, TrainStepRecord
from utils.logging_config import PrivacyLogger

logger = logging.getLogger(__name__)
privacy_logger = PrivacyLogger()

SWEEP_EPSILONS = (1.0, 4.0, 8.0)


# -- clipping and noise -------------------------------------------------

def clip(g: np.ndarray, clip_bound: float) -> np.ndarray:
    """
    Scale g down to L2 norm at most C

    Args:
        g: Gradient vector
        clip_bound: Bound C > 0 (inf disables clipping)

    Returns:
        g / max(1, ||g|| / C); gradients within the bound come back unchanged
    """
    if not clip_bound > 0:
        raise BudgetConfigurationError(f"Clip bound must be positive, got {clip_bound}")
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm <= clip_bound:
        return g.copy()
    return g / (norm / clip_bound)


def clip_rows(gradients: np.ndarray, clip_bound: float) -> np.ndarray:
    """Row-wise clip of a (B, P) matrix of per-example gradients"""
    if not clip_bound > 0:
        raise BudgetConfigurationError(f"Clip bound must be positive, got {clip_bound}")
    gradients = np.asarray(gradients, dtype=np.float64)
    norms = np.linalg.norm(gradients, axis=1)
    factors = np.maximum(1.0, norms / clip_bound)
    clipped = gradients.copy()
    over = factors > 1.0
    clipped[over] = gradients[over] / factors[over, None]
    return clipped


def clipped_sum(gradients: np.ndarray, clip_bound: float) -> np.ndarray:
    """Pre-noise aggregate of clipped per-example gradients"""
    gradients = np.atleast_2d(np.asarray(gradients, dtype=np.float64))
    return clip_rows(gradients, clip_bound).sum(axis=0)


def sanitize(clipped: Union[np.ndarray, Sequence[np.ndarray]], noise_multiplier: float,
             clip_bound: float, lot_size: int, rng: np.random.Generator) -> np.ndarray:
    """
    (sum of clipped gradients + N(0, sigma^2 C^2 I)) / L

    Args:
        clipped: Pre-clipped per-example gradients, shape (B, P)
        noise_multiplier: sigma
        clip_bound: C
        lot_size: Normalizer L
        rng: Seeded generator for the noise draw

    Returns:
        Sanitized gradient of shape (P,)
    """
    clipped = np.atleast_2d(np.asarray(clipped, dtype=np.float64))
    total = clipped.sum(axis=0)
    if noise_multiplier > 0:
        std = noise_multiplier * clip_bound
        if not math.isfinite(std):
            raise BudgetConfigurationError("Noise needs a finite clip bound")
        total = total + rng.normal(0.0, std, size=total.shape)
    return total / lot_size


# -- log-moment arithmetic ----------------------------------------------

def _log_add(logx: float, logy: float) -> float:
    a, b = min(logx, logy), max(logx, logy)
    if a == -np.inf:
        return b
    return math.log1p(math.exp(a - b)) + b


def _log_sub(logx: float, logy: float) -> float:
    if logx < logy:
        raise PrivacyError("Log-space subtraction would be negative")
    if logy == -np.inf:
        return logx
    if logx == logy:
        return -np.inf
    try:
        return math.log(math.expm1(logx - logy)) + logy
    except OverflowError:
        return logx


def _log_erfc(x: float) -> float:
    return math.log(2) + special.log_ndtr(-x * 2 ** 0.5)


def _log_comb(n: int, k: int) -> float:
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    log_a = -np.inf
    for i in range(alpha + 1):
        log_coef = _log_comb(alpha, i) + i * math.log(q) + (alpha - i) * math.log(1 - q)
        log_a = _log_add(log_a, log_coef + (i * i - i) / (2 * sigma ** 2))
    return float(log_a)


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    # split the integral at z0 where the two mixture components cross
    log_a0, log_a1 = -np.inf, -np.inf
    z0 = sigma ** 2 * math.log(1 / q - 1) + 0.5
    i = 0
    while True:
        coef = special.binom(alpha, i)
        log_coef = math.log(abs(coef))
        j = alpha - i

        log_t0 = log_coef + i * math.log(q) + j * math.log(1 - q)
        log_t1 = log_coef + j * math.log(q) + i * math.log(1 - q)
        log_e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2) * sigma))
        log_e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2) * sigma))
        log_s0 = log_t0 + (i * i - i) / (2 * sigma ** 2) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2 * sigma ** 2) + log_e1

        if coef > 0:
            log_a0 = _log_add(log_a0, log_s0)
            log_a1 = _log_add(log_a1, log_s1)
        else:
            log_a0 = _log_sub(log_a0, log_s0)
            log_a1 = _log_sub(log_a1, log_s1)

        i += 1
        if max(log_s0, log_s1) < -30:
            break
    return _log_add(log_a0, log_a1)


@functools.lru_cache(maxsize=4096)
def single_step_log_moment(q: float, sigma: float, alpha: float) -> float:
    """
    log E_{z~N(0,s^2)}[((1-q) + q N(1,s^2)(z)/N(0,s^2)(z))^alpha] of one subsampled Gaussian step

    Args:
        q: Sampling probability in (0, 1]
        sigma: Noise multiplier
        alpha: Renyi order > 1

    Returns:
        log A_alpha; inf when sigma is zero, 0 when q is zero
    """
    if not 0 <= q <= 1:
        raise BudgetConfigurationError(f"Sampling probability must lie in [0, 1], got {q}")
    if q == 0:
        return 0.0
    if sigma == 0:
        return math.inf
    if q == 1.0:
        return alpha * (alpha - 1) / (2 * sigma ** 2)
    if float(alpha).is_integer():
        return _log_a_int(q, sigma, int(alpha))
    return _log_a_frac(q, sigma, alpha)


# -- accountant ---------------------------------------------------------

@dataclass(frozen=True)
class PrivacyAccountant:
    """Cumulative log-moments per Renyi order after `steps` subsampled Gaussian steps"""
    orders: Tuple[float, ...] = tuple(DEFAULT_ORDERS)
    log_moments: Tuple[float, ...] = ()
    steps: int = 0

    def __post_init__(self):
        if not self.log_moments:
            object.__setattr__(self, "log_moments", tuple(0.0 for _ in self.orders))
        if len(self.log_moments) != len(self.orders):
            raise PrivacyError("One log-moment per order is required")


def accountant_update(acct: PrivacyAccountant, q: float, sigma: float, steps: int = 1) -> PrivacyAccountant:
    """Compose `steps` more subsampled Gaussian steps at (q, sigma)"""
    if not 0 < q <= 1:
        raise BudgetConfigurationError(f"Sampling probability must lie in (0, 1], got {q}")
    if sigma < 0:
        raise BudgetConfigurationError(f"Noise multiplier must be non-negative, got {sigma}")
    moments = tuple(
        m + steps * single_step_log_moment(q, sigma, a) for a, m in zip(acct.orders, acct.log_moments)
    )
    return replace(acct, log_moments=moments, steps=acct.steps + steps)


def accountant_epsilon(acct: PrivacyAccountant, delta: float) -> float:
    """
    Epsilon spent at the given delta

    Args:
        acct: Accountant state
        delta: Target delta in (0, 1)

    Returns:
        min over orders of (log-moment + log(1/delta)) / (alpha - 1); 0 before any step
    """
    if not 0 < delta < 1:
        raise BudgetConfigurationError(f"Delta must lie in (0, 1), got {delta}")
    if acct.steps == 0:
        return 0.0
    log_inv_delta = math.log(1 / delta)
    candidates = [(m + log_inv_delta) / (a - 1) for a, m in zip(acct.orders, acct.log_moments)]
    return float(min(candidates))


def compute_epsilon(q: float, sigma: float, steps: int, delta: float,
                    orders: Sequence[float] = DEFAULT_ORDERS) -> float:
    acct = PrivacyAccountant(tuple(orders))
    if steps == 0:
        return 0.0
    return accountant_epsilon(accountant_update(acct, q, sigma, steps), delta)


def noise_multiplier_for_epsilon(target_epsilon: float, q: float, steps: int, delta: float,
                                 orders: Sequence[float] = DEFAULT_ORDERS,
                                 lower: float = 0.3, upper: float = 64.0, xtol: float = 1e-4) -> float:
    """
    Smallest sigma whose accounted epsilon after `steps` stays at or below the target

    Args:
        target_epsilon: Epsilon to reach
        q: Sampling probability
        steps: Planned number of steps
        delta: Target delta
        orders: Renyi orders
        lower: Lower end of the search bracket
        upper: Upper end of the search bracket
        xtol: Bisection tolerance on sigma

    Returns:
        Noise multiplier sigma
    """
    if target_epsilon <= 0:
        raise BudgetConfigurationError(f"Target epsilon must be positive, got {target_epsilon}")

    def excess(sigma: float) -> float:
        return compute_epsilon(q, sigma, steps, delta, orders) - target_epsilon

    if excess(lower) <= 0:
        return lower
    while excess(upper) > 0:
        upper *= 2
        if upper > 1e4:
            raise BudgetConfigurationError(
                f"No noise multiplier up to 1e4 reaches epsilon {target_epsilon} in {steps} steps"
            )
    try:
        sigma = optimize.bisect(excess, lower, upper, xtol=xtol)
    except (ValueError, RuntimeError) as e:
        logger.error(f"Noise multiplier search failed: {str(e)}")
        raise BudgetConfigurationError(f"Noise multiplier search failed: {str(e)}")
    # bisect may land just below the root; step up to the safe side
    while excess(sigma) > 0:
        sigma += xtol
    privacy_logger.log_noise_multiplier(sigma, target_epsilon, delta, steps)
    return float(sigma)


def epsilon_sweep(q: float, steps: int, delta: float,
                  epsilons: Iterable[float] = SWEEP_EPSILONS) -> Dict[float, float]:
    """Noise multiplier for each target epsilon"""
    return {float(eps): noise_multiplier_for_epsilon(eps, q, steps, delta) for eps in epsilons}


# -- optimizer and private step -----------------------------------------

@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_update(params: np.ndarray, grad: np.ndarray, state: AdamState,
                config: AdamConfig) -> Tuple[np.ndarray, AdamState]:
    """One Adam step on the (possibly sanitized) gradient"""
    t = state.t + 1
    m = config.beta1 * state.m + (1 - config.beta1) * grad
    v = config.beta2 * state.v + (1 - config.beta2) * grad * grad
    m_hat = m / (1 - config.beta1 ** t)
    v_hat = v / (1 - config.beta2 ** t)
    updated = params - config.rate_at(state.t) * m_hat / (np.sqrt(v_hat) + config.eps)
    return updated, AdamState(m, v, t)


def sample_lot(rng: np.random.Generator, dataset_size: int, config: DpConfig) -> np.ndarray:
    """Indices of one lot: L without replacement, or each example with probability L/N"""
    if config.sampling is SamplingMode.POISSON:
        return np.flatnonzero(rng.random(dataset_size) < config.sampling_rate)
    return np.sort(rng.choice(dataset_size, size=config.lot_size, replace=False))


@dataclass(frozen=True)
class StepOutcome:
    model: object
    optimizer: AdamState
    accountant: PrivacyAccountant
    loss: float
    grad_norms: np.ndarray
    epsilon: float


@dataclass(frozen=True)
class BudgetExhausted:
    """Stop signal: the next step would spend more than the budget"""
    accountant: PrivacyAccountant
    epsilon: float
    prospective_epsilon: float
    budget: float


GradientFn = Callable[[object, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def private_step(model, lot_x: np.ndarray, lot_y: np.ndarray, config: DpConfig,
                 optimizer: AdamState, accountant: PrivacyAccountant, rng: np.random.Generator,
                 gradient_fn: GradientFn, adam: AdamConfig) -> Union[StepOutcome, BudgetExhausted]:
    """
    Clip, sanitize and apply one Adam step, or signal that the budget is spent

    Args:
        model: Object exposing flat_parameters() and with_parameters(vector)
        lot_x: Lot features
        lot_y: Lot labels
        config: DP settings
        optimizer: Adam moments
        accountant: Accountant before this step
        rng: Generator for the noise draw
        gradient_fn: (model, x, y) -> (per-example gradients (B, P), per-example losses (B,))
        adam: Optimizer hyperparameters

    Returns:
        StepOutcome, or BudgetExhausted without touching the model
    """
    delta = config.target_delta
    prospective = accountant_update(accountant, config.sampling_rate, config.noise_multiplier)
    prospective_eps = accountant_epsilon(prospective, delta)
    if config.epsilon_budget is not None and prospective_eps > config.epsilon_budget:
        spent = accountant_epsilon(accountant, delta)
        privacy_logger.log_budget_exhausted(accountant.steps, spent, config.epsilon_budget)
        return BudgetExhausted(accountant, spent, prospective_eps, config.epsilon_budget)

    params = model.flat_parameters()
    if len(lot_x) == 0:
        noisy = sanitize(np.zeros((1, params.size)), config.noise_multiplier,
                         config.clip_bound, config.lot_size, rng)
        losses = np.zeros(0)
        norms = np.zeros(0)
    else:
        gradients, losses = gradient_fn(model, lot_x, lot_y)
        norms = np.linalg.norm(gradients, axis=1)
        clipped = clip_rows(gradients, config.clip_bound)
        noisy = sanitize(clipped, config.noise_multiplier, config.clip_bound, config.lot_size, rng)

    updated, optimizer = adam_update(params, noisy, optimizer, adam)
    logger.debug(f"Private step {prospective.steps}: epsilon {prospective_eps:.4f}")
    return StepOutcome(
        model=model.with_parameters(updated),
        optimizer=optimizer,
        accountant=prospective,
        loss=float(np.mean(losses)) if len(losses) else 0.0,
        grad_norms=norms,
        epsilon=prospective_eps,
    )


# -- training log -------------------------------------------------------

def write_training_log(records: Iterable[TrainStepRecord], path: Union[str, Path]) -> None:
    """One JSON object per line"""
    try:
        with open(path, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(record.model_dump_json() + "\n")
    except OSError as e:
        logger.error(f"Cannot write training log {path}: {str(e)}")
        raise PrivacyError(f"Cannot write training log {path}: {str(e)}")


def read_training_log(path: Union[str, Path]) -> List[TrainStepRecord]:
    with open(path, "r", encoding="utf-8") as handle:
        return [TrainStepRecord.model_validate_json(line) for line in handle if line.strip()]


class PrivacyError(Exception):
    """Custom exception for differential privacy errors"""
    pass


class BudgetConfigurationError(PrivacyError):
    """Privacy parameters are out of range or unattainable"""
    pass
