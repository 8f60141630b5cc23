"""
Encryption Models
Parameter sets and fixed-point scale metadata for the FV-RNS scheme
"""

import hashlib
import json
import math
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator, validator


class EncryptionParams(BaseModel):
    """FV-RNS parameters: one scheme instance per plaintext modulus"""
    ring_dimension: int = Field(..., description="Ring degree n, a power of two")
    plain_moduli: List[int] = Field(..., description="Plaintext prime t per instance")
    coeff_moduli: List[List[int]] = Field(..., description="Coefficient primes q_i per instance")
    relin_base_bits: int = Field(default=16, description="log2 of the relinearization base beta")
    noise_std: float = Field(default=3.2, gt=0, description="Standard deviation of the error distribution")

    @validator('ring_dimension')
    def validate_ring_dimension(cls, v):
        if v < 2 or v & (v - 1):
            raise ValueError(f"Ring dimension must be a power of two, got {v}")
        return v

    @validator('relin_base_bits')
    def validate_relin_base(cls, v):
        if not 1 <= v <= 32:
            raise ValueError(f"Relinearization base bits must lie in [1, 32], got {v}")
        return v

    @model_validator(mode="after")
    def validate_instances(self):
        if not self.plain_moduli:
            raise ValueError("At least one plaintext modulus is required")
        if len(self.plain_moduli) != len(self.coeff_moduli):
            raise ValueError("Each plaintext modulus needs its own coefficient base")
        if len(set(self.plain_moduli)) != len(self.plain_moduli):
            raise ValueError("Plaintext moduli must be distinct")
        for t, base in zip(self.plain_moduli, self.coeff_moduli):
            if not base:
                raise ValueError("Coefficient base must not be empty")
            if t < 2 or any(t >= q for q in base):
                raise ValueError(f"Plaintext modulus {t} must be smaller than every q_i")
        return self

    @property
    def instances(self) -> int:
        return len(self.plain_moduli)

    @property
    def noise_bound(self) -> int:
        """Truncation bound of the error distribution (6 sigma)"""
        return int(math.floor(6 * self.noise_std))

    @property
    def relin_base(self) -> int:
        return 1 << self.relin_base_bits

    def coeff_modulus(self, instance: int) -> int:
        return math.prod(self.coeff_moduli[instance])

    def delta(self, instance: int) -> int:
        return self.coeff_modulus(instance) // self.plain_moduli[instance]

    def relin_digits(self, instance: int) -> int:
        """Number of base-beta digits, floor(log_beta q) + 1"""
        q = self.coeff_modulus(instance)
        return (q.bit_length() - 1) // self.relin_base_bits + 1

    @property
    def plain_capacity(self) -> int:
        """Product of the plaintext moduli (CRT range)"""
        return math.prod(self.plain_moduli)

    def digest(self) -> str:
        payload = json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class StageScale(BaseModel):
    """Fixed-point exponent and plaintext growth after one circuit stage"""
    name: str = Field(..., description="Stage label, e.g. layer1, act1")
    exponent: int = Field(..., ge=0, description="Accumulated power-of-two scale in bits")
    coefficient_bound_bits: Optional[int] = Field(None, description="log2 bound on plaintext coefficients")
    degree: Optional[int] = Field(None, description="Bound on plaintext polynomial degree")


class ScaleMeta(BaseModel):
    """Per-stage scale schedule of the encrypted circuit"""
    input_bits: int = Field(default=15, ge=0, description="Fixed-point bits of encrypted inputs")
    weight_bits: int = Field(default=15, ge=0, description="Fixed-point bits of plaintext weights")
    stages: List[StageScale] = Field(default_factory=list, description="Accumulated exponent per stage")

    @property
    def output_exponent(self) -> int:
        return self.stages[-1].exponent if self.stages else self.input_bits

    def exponent_of(self, name: str) -> int:
        for stage in self.stages:
            if stage.name == name:
                return stage.exponent
        raise KeyError(name)
