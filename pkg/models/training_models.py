"""
Training Models
Configuration and per-step records for plain and differentially private training
"""

import hashlib
import json
import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator, validator


DEFAULT_ORDERS = [1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0, 7.0, 8.0,
                  10.0, 12.0, 14.0, 16.0, 20.0, 24.0, 28.0, 32.0, 48.0, 64.0]


class SamplingMode(str, Enum):
    """How lots are drawn each step"""
    FIXED = "fixed"
    POISSON = "poisson"


class DpConfig(BaseModel):
    """Gradient sanitization and accounting settings"""
    clip_bound: float = Field(default=1.0, gt=0, description="Per-example L2 clipping bound C (inf disables clipping)")
    noise_multiplier: float = Field(default=4.0, ge=0, description="Noise scale sigma; noise std is sigma * C")
    lot_size: int = Field(default=256, gt=0, description="Lot size L")
    dataset_size: int = Field(..., gt=0, description="Training set size N")
    delta: Optional[float] = Field(None, gt=0, lt=1, description="Target delta; defaults to 1/N")
    epsilon_budget: Optional[float] = Field(None, ge=0, description="Stop when epsilon would exceed this")
    sampling: SamplingMode = Field(default=SamplingMode.FIXED, description="Fixed-size or Poisson lots")
    orders: List[float] = Field(default_factory=lambda: list(DEFAULT_ORDERS), description="Renyi orders")

    @validator('orders')
    def validate_orders(cls, v):
        if not v or any(a <= 1 for a in v):
            raise ValueError("Renyi orders must all exceed 1")
        return sorted(v)

    @model_validator(mode="after")
    def validate_sampling_rate(self):
        if self.lot_size > self.dataset_size:
            raise ValueError(f"Lot size {self.lot_size} exceeds dataset size {self.dataset_size}")
        return self

    @property
    def sampling_rate(self) -> float:
        return self.lot_size / self.dataset_size

    @property
    def target_delta(self) -> float:
        return self.delta if self.delta is not None else 1.0 / self.dataset_size

    @property
    def noise_std(self) -> float:
        """Per-coordinate std of the summed noise, sigma * C"""
        if math.isinf(self.clip_bound):
            return 0.0 if self.noise_multiplier == 0 else math.inf
        return self.noise_multiplier * self.clip_bound


class AdamConfig(BaseModel):
    learning_rate: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    decay: float = Field(default=0.0, ge=0, description="Learning rate eta_t = lr / (1 + decay * t)")

    def rate_at(self, step: int) -> float:
        return self.learning_rate / (1.0 + self.decay * step)


class TrainConfig(BaseModel):
    """Training run configuration; dp turns every step into a private step"""
    batch_size: int = Field(default=256, gt=0, description="Minibatch size (lot size under DP)")
    epochs: int = Field(default=20, ge=0, description="Passes over the training set")
    positive_weight: float = Field(default=8.0, gt=0, description="Loss weight w_pos of label 1")
    optimizer: AdamConfig = Field(default_factory=AdamConfig)
    dp: Optional[DpConfig] = Field(None, description="Differential privacy settings")
    seed: int = Field(default=0, description="Seed for initialization, lots and noise")
    hidden_units: int = Field(default=32, gt=0, description="Width of the hidden layer")
    activation: str = Field(default="swish-quant", description="Activation variant name")
    swish_exponents: Optional[List[int]] = Field(
        None, description="Base-2 exponents (ascending) for swish-quant; None uses the reference tuple")
    use_bias: bool = Field(default=True, description="Include bias terms")
    log_path: Optional[str] = Field(None, description="JSON-lines training log path")

    @model_validator(mode="after")
    def validate_swish_exponents(self):
        if self.swish_exponents is not None:
            if self.activation != "swish-quant":
                raise ValueError(f"swish_exponents only applies to swish-quant, not {self.activation}")
            if not self.swish_exponents:
                raise ValueError("swish_exponents must not be empty")
        return self

    def digest(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class TrainStepRecord(BaseModel):
    """One line of the training log"""
    step: int
    epoch: int
    loss: float
    epsilon: Optional[float] = Field(None, description="Epsilon spent so far (DP runs)")
    grad_norm_median: float = Field(..., description="Median per-example gradient L2 norm")
    lot_size: int
