"""
Network Service
The d -> h -> 1 multilayer perceptron: forward pass, weighted MSE, analytic per-example
gradients, plain and private training, and the text model file
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import expit

from models.network_models import ActivationKind, ActivationSpec, variant_activations
from models.training_models import TrainConfig, TrainStepRecord
from services.dpsgd import (
    AdamState, BudgetExhausted, PrivacyAccountant, accountant_epsilon, adam_update,
    private_step, sample_lot, write_training_log,
)
from utils.logging_config import PrivacyLogger

logger = logging.getLogger(__name__)
privacy_logger = PrivacyLogger()

MODEL_FORMAT = "privacare-mlp"
MODEL_VERSION = 1


# -- activations --------------------------------------------------------

def activate(spec: ActivationSpec, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if spec.kind is ActivationKind.SQUARE:
        return z * z
    if spec.kind is ActivationKind.RELU:
        return np.maximum(z, 0.0)
    if spec.kind is ActivationKind.SIGMOID:
        return expit(z)
    return npoly.polyval(z, spec.real_coefficients())


def activate_derivative(spec: ActivationSpec, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if spec.kind is ActivationKind.SQUARE:
        return 2.0 * z
    if spec.kind is ActivationKind.RELU:
        return (z > 0).astype(np.float64)
    if spec.kind is ActivationKind.SIGMOID:
        s = expit(z)
        return s * (1.0 - s)
    return npoly.polyval(z, npoly.polyder(spec.real_coefficients()))


# -- model --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MlpModel:
    """Float weights of the d -> h -> 1 network"""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    hidden: ActivationSpec
    output: ActivationSpec
    use_bias: bool = True
    seed: int = 0
    preprocess_digest: Optional[str] = None

    def __post_init__(self):
        w1 = np.array(self.w1, dtype=np.float64, ndmin=2)
        b1 = np.array(self.b1, dtype=np.float64).reshape(-1)
        w2 = np.array(self.w2, dtype=np.float64).reshape(-1)
        if b1.shape != (w1.shape[1],) or w2.shape != (w1.shape[1],):
            raise DimensionError(
                f"Inconsistent shapes: W1 {w1.shape}, b1 {b1.shape}, W2 {w2.shape}"
            )
        if not self.use_bias:
            b1 = np.zeros_like(b1)
        for arr in (w1, b1, w2):
            arr.setflags(write=False)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", float(self.b2) if self.use_bias else 0.0)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_units(self) -> int:
        return self.w1.shape[1]

    @property
    def parameter_count(self) -> int:
        return self.w1.size + 2 * self.hidden_units + 1

    def flat_parameters(self) -> np.ndarray:
        """W1 (row-major), b1, W2, b2"""
        return np.concatenate([self.w1.reshape(-1), self.b1, self.w2, [self.b2]])

    def with_parameters(self, vector: np.ndarray) -> "MlpModel":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.parameter_count,):
            raise DimensionError(f"Expected {self.parameter_count} parameters, got {vector.shape}")
        d, h = self.w1.shape
        cut = d * h
        return replace(
            self,
            w1=vector[:cut].reshape(d, h),
            b1=vector[cut:cut + h],
            w2=vector[cut + h:cut + 2 * h],
            b2=float(vector[-1]),
        )


def init_model(input_dim: int, hidden_units: int = 32, activations: Optional[Tuple[ActivationSpec, ActivationSpec]] = None,
               seed: int = 0, use_bias: bool = True, variant: str = "swish-quant") -> MlpModel:
    """Glorot-uniform weights, zero biases"""
    rng = np.random.default_rng(seed)
    hidden, output = activations or variant_activations(variant)
    limit1 = math.sqrt(6.0 / (input_dim + hidden_units))
    limit2 = math.sqrt(6.0 / (hidden_units + 1))
    return MlpModel(
        w1=rng.uniform(-limit1, limit1, size=(input_dim, hidden_units)),
        b1=np.zeros(hidden_units),
        w2=rng.uniform(-limit2, limit2, size=hidden_units),
        b2=0.0,
        hidden=hidden,
        output=output,
        use_bias=use_bias,
        seed=seed,
    )


@dataclass(frozen=True)
class ForwardCache:
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    score: np.ndarray


def _check_inputs(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionError(f"Input has {x.shape[-1]} features, model expects {model.input_dim}")
    return x


def forward_batch(model: MlpModel, x: np.ndarray) -> ForwardCache:
    x = np.atleast_2d(_check_inputs(model, x))
    z1 = x @ model.w1 + model.b1
    a1 = activate(model.hidden, z1)
    z2 = a1 @ model.w2 + model.b2
    return ForwardCache(z1, a1, z2, activate(model.output, z2))


def forward(model: MlpModel, x: np.ndarray) -> Tuple[float, ForwardCache]:
    """
    Score of a single feature vector

    Args:
        model: Float network
        x: Feature vector of length d

    Returns:
        (score, cached pre- and post-activations)
    """
    x = _check_inputs(model, x)
    if x.ndim != 1:
        raise DimensionError(f"forward takes one feature vector, got shape {x.shape}")
    cache = forward_batch(model, x[None, :])
    return float(cache.score[0]), cache


def predict_scores(model: MlpModel, x: np.ndarray, batch_size: Optional[int] = None) -> np.ndarray:
    x = np.atleast_2d(_check_inputs(model, x))
    if batch_size is None or batch_size >= len(x):
        return forward_batch(model, x).score
    parts = [forward_batch(model, x[i:i + batch_size]).score for i in range(0, len(x), batch_size)]
    return np.concatenate(parts)


# -- loss and gradients -------------------------------------------------

def example_weights(labels: np.ndarray, positive_weight: float) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    return np.where(labels == 1, positive_weight, 1.0)


def weighted_mse(scores, labels, positive_weight: float = 8.0) -> float:
    """Mean of w(label) * (score - label)^2 with w(1) = w_pos, w(0) = 1"""
    scores = np.atleast_1d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.float64))
    return float(np.mean(example_weights(labels, positive_weight) * (scores - labels) ** 2))


def per_example_gradients(model: MlpModel, x: np.ndarray, y: np.ndarray,
                          positive_weight: float = 8.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact gradients of each example's weighted squared error

    Args:
        model: Float network
        x: Batch features (B, d)
        y: Batch labels (B,)
        positive_weight: w_pos

    Returns:
        (gradients (B, P) in flat_parameters order, losses (B,))
    """
    x = np.atleast_2d(_check_inputs(model, x))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    cache = forward_batch(model, x)
    w = example_weights(y, positive_weight)
    residual = cache.score - y
    losses = w * residual ** 2

    dz2 = 2.0 * w * residual * activate_derivative(model.output, cache.z2)
    grad_w2 = dz2[:, None] * cache.a1
    dz1 = dz2[:, None] * model.w2[None, :] * activate_derivative(model.hidden, cache.z1)
    grad_w1 = x[:, :, None] * dz1[:, None, :]

    grad_b1, grad_b2 = dz1, dz2[:, None]
    if not model.use_bias:
        grad_b1, grad_b2 = np.zeros_like(grad_b1), np.zeros_like(grad_b2)

    batch = x.shape[0]
    gradients = np.concatenate([grad_w1.reshape(batch, -1), grad_b1, grad_w2, grad_b2], axis=1)
    return gradients, losses


def batch_gradient(model: MlpModel, x: np.ndarray, y: np.ndarray, positive_weight: float = 8.0) -> np.ndarray:
    """Gradient of the mean batch loss"""
    gradients, _ = per_example_gradients(model, x, y, positive_weight)
    return gradients.mean(axis=0)


def gradient_norms(model: MlpModel, x: np.ndarray, y: np.ndarray, positive_weight: float = 8.0) -> np.ndarray:
    gradients, _ = per_example_gradients(model, x, y, positive_weight)
    return np.linalg.norm(gradients, axis=1)


# -- training -----------------------------------------------------------

@dataclass
class TrainHistory:
    records: List[TrainStepRecord] = field(default_factory=list)
    epoch_losses: List[float] = field(default_factory=list)
    epoch_grad_norms: List[np.ndarray] = field(default_factory=list)
    epsilon: Optional[float] = None
    delta: Optional[float] = None
    stopped_early: bool = False
    noise_multiplier: Optional[float] = None

    @property
    def steps(self) -> int:
        return len(self.records)


def _check_finite(loss: float, step: int, epoch: int, model: MlpModel):
    if not math.isfinite(loss) or not np.all(np.isfinite(model.flat_parameters())):
        logger.error(f"Training diverged at step {step} (epoch {epoch}): loss={loss}")
        raise DivergenceError(
            f"Training diverged at step {step} (epoch {epoch}): loss={loss}, "
            f"max |param|={float(np.nanmax(np.abs(model.flat_parameters()))):.3e}; "
            f"lower the learning rate or check feature scaling"
        )


def train(x: np.ndarray, y: np.ndarray, config: TrainConfig,
          model: Optional[MlpModel] = None) -> Tuple[MlpModel, TrainHistory]:
    """
    Train with Adam; every step is a private step when config.dp is set

    Args:
        x: Training features (N, d)
        y: Training labels (N,)
        config: Training configuration
        model: Optional starting model; Glorot-initialized from config.seed otherwise

    Returns:
        (trained model, history); a DP run stops cleanly on budget exhaustion
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise ModelError("Cannot train on an empty dataset")
    if config.batch_size > n:
        raise ModelError(f"Batch size {config.batch_size} exceeds dataset size {n}")
    activations = None
    if config.swish_exponents is not None:
        exponents = tuple(config.swish_exponents)
        activations = variant_activations(config.activation, base2=(exponents, (1,) * len(exponents)))
    model = model or init_model(x.shape[1], config.hidden_units, activations, seed=config.seed,
                                use_bias=config.use_bias, variant=config.activation)
    rng = np.random.default_rng(config.seed + 1)
    optimizer = AdamState.zeros(model.parameter_count)
    history = TrainHistory()
    w_pos = config.positive_weight
    step = 0

    dp = config.dp
    if dp is not None:
        if dp.dataset_size != n:
            raise ModelError(f"DP config assumes N={dp.dataset_size}, dataset has {n} rows")
        accountant = PrivacyAccountant(tuple(dp.orders))
        history.delta = dp.target_delta
        history.noise_multiplier = dp.noise_multiplier
        steps_per_epoch = max(n // dp.lot_size, 1)
        gradient_fn = lambda m, bx, by: per_example_gradients(m, bx, by, w_pos)

    for epoch in range(1, config.epochs + 1):
        losses, norms = [], []
        if dp is None:
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                gradients, batch_losses = per_example_gradients(model, x[idx], y[idx], w_pos)
                params, optimizer = adam_update(
                    model.flat_parameters(), gradients.mean(axis=0), optimizer, config.optimizer
                )
                model = model.with_parameters(params)
                step += 1
                loss = float(batch_losses.mean())
                _check_finite(loss, step, epoch, model)
                step_norms = np.linalg.norm(gradients, axis=1)
                losses.append(loss)
                norms.append(step_norms)
                history.records.append(TrainStepRecord(
                    step=step, epoch=epoch, loss=loss, epsilon=None,
                    grad_norm_median=float(np.median(step_norms)), lot_size=len(idx),
                ))
        else:
            for _ in range(steps_per_epoch):
                idx = sample_lot(rng, n, dp)
                outcome = private_step(model, x[idx], y[idx], dp, optimizer, accountant,
                                       rng, gradient_fn, config.optimizer)
                if isinstance(outcome, BudgetExhausted):
                    history.stopped_early = True
                    history.epsilon = outcome.epsilon
                    logger.info(
                        f"Privacy budget {outcome.budget} reached after {accountant.steps} steps "
                        f"(epsilon {outcome.epsilon:.4f})"
                    )
                    return _finish(model, history, config)
                model, optimizer, accountant = outcome.model, outcome.optimizer, outcome.accountant
                step += 1
                _check_finite(outcome.loss, step, epoch, model)
                losses.append(outcome.loss)
                norms.append(outcome.grad_norms)
                history.records.append(TrainStepRecord(
                    step=step, epoch=epoch, loss=outcome.loss, epsilon=outcome.epsilon,
                    grad_norm_median=float(np.median(outcome.grad_norms)) if len(idx) else 0.0,
                    lot_size=len(idx),
                ))
            history.epsilon = accountant_epsilon(accountant, dp.target_delta)
            privacy_logger.log_epoch(epoch, accountant.steps, history.epsilon, dp.target_delta)

        history.epoch_losses.append(float(np.mean(losses)) if losses else 0.0)
        history.epoch_grad_norms.append(np.concatenate(norms) if norms else np.zeros(0))
        logger.debug(f"Epoch {epoch}: loss {history.epoch_losses[-1]:.6f}")

    if dp is not None and history.epsilon is None:
        history.epsilon = 0.0
    return _finish(model, history, config)


def _finish(model: MlpModel, history: TrainHistory, config: TrainConfig) -> Tuple[MlpModel, TrainHistory]:
    if config.log_path:
        write_training_log(history.records, config.log_path)
    eps = f", epsilon {history.epsilon:.4f} at delta {history.delta:.2e}" if history.delta else ""
    logger.info(f"Training finished after {history.steps} steps{eps}")
    return model, history


# -- model file ---------------------------------------------------------

def _floats(values) -> str:
    return ",".join(repr(float(v)) for v in np.asarray(values).reshape(-1))


def model_to_text(model: MlpModel) -> str:
    entries = [
        ("format", MODEL_FORMAT),
        ("version", str(MODEL_VERSION)),
        ("input_dim", str(model.input_dim)),
        ("hidden_units", str(model.hidden_units)),
        ("hidden_activation", model.hidden.to_text()),
        ("output_activation", model.output.to_text()),
        ("use_bias", "true" if model.use_bias else "false"),
        ("seed", str(model.seed)),
        ("preprocess_digest", model.preprocess_digest or ""),
        ("w1", _floats(model.w1)),
        ("b1", _floats(model.b1)),
        ("w2", _floats(model.w2)),
        ("b2", repr(float(model.b2))),
    ]
    return "".join(f"{key}={value}\n" for key, value in entries)


def model_from_text(text: str) -> MlpModel:
    try:
        fields: Dict[str, str] = dict(
            line.split("=", 1) for line in text.splitlines() if line.strip() and not line.startswith("#")
        )
        if fields.get("format") != MODEL_FORMAT:
            raise ModelError(f"Not a model file (format={fields.get('format')!r})")
        if int(fields["version"]) != MODEL_VERSION:
            raise ModelError(f"Unsupported model file version {fields['version']}")
        d, h = int(fields["input_dim"]), int(fields["hidden_units"])
        parse = lambda key: np.array([float(v) for v in fields[key].split(",") if v], dtype=np.float64)
        return MlpModel(
            w1=parse("w1").reshape(d, h),
            b1=parse("b1"),
            w2=parse("w2"),
            b2=float(fields["b2"]),
            hidden=ActivationSpec.from_text(fields["hidden_activation"]),
            output=ActivationSpec.from_text(fields["output_activation"]),
            use_bias=fields["use_bias"] == "true",
            seed=int(fields["seed"]),
            preprocess_digest=fields.get("preprocess_digest") or None,
        )
    except (KeyError, ValueError) as e:
        logger.error(f"Malformed model file: {str(e)}")
        raise ModelError(f"Malformed model file: {str(e)}")


def save_model(model: MlpModel, path: Union[str, Path]) -> None:
    Path(path).write_text(model_to_text(model), encoding="utf-8")


def load_model(path: Union[str, Path]) -> MlpModel:
    return model_from_text(Path(path).read_text(encoding="utf-8"))


class ModelError(Exception):
    """Custom exception for network and inference errors"""
    pass


class DimensionError(ModelError):
    """Array shapes disagree with the model"""
    pass


class DivergenceError(ModelError):
    """Training produced non-finite values"""
    pass


class QuantizationError(ModelError):
    """Model cannot be converted to fixed point"""
    pass


class CircuitError(ModelError):
    """Encrypted circuit invariant violated"""
    pass
