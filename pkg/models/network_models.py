"""
Network Models
Activation specifications for the d -> h -> 1 network
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator


class ActivationKind(str, Enum):
    """Supported activation realizations"""
    SQUARE = "square"
    POLY = "poly"
    BASE2 = "base2"
    RELU = "relu"
    SIGMOID = "sigmoid"


class ActivationSpec(BaseModel):
    """One activation; poly carries real coefficients, base2 carries exponents and signs (ascending powers)"""
    kind: ActivationKind
    coefficients: List[float] = Field(default_factory=list, description="Real coefficients, ascending")
    exponents: List[int] = Field(default_factory=list, description="Power-of-two exponents, ascending")
    signs: List[int] = Field(default_factory=list, description="Term signs in {-1, 0, 1}")

    @model_validator(mode="after")
    def validate_terms(self):
        if self.kind is ActivationKind.POLY and not self.coefficients:
            raise ValueError("Polynomial activation needs coefficients")
        if self.kind is ActivationKind.BASE2:
            if not self.exponents or len(self.exponents) != len(self.signs):
                raise ValueError("Base-2 activation needs one sign per exponent")
            if any(s not in (-1, 0, 1) for s in self.signs):
                raise ValueError("Base-2 signs must be -1, 0 or 1")
        return self

    @property
    def is_polynomial(self) -> bool:
        return self.kind in (ActivationKind.SQUARE, ActivationKind.POLY, ActivationKind.BASE2)

    def real_coefficients(self) -> Tuple[float, ...]:
        """Ascending coefficients of a polynomial activation"""
        if self.kind is ActivationKind.SQUARE:
            return (0.0, 0.0, 1.0)
        if self.kind is ActivationKind.POLY:
            return tuple(self.coefficients)
        if self.kind is ActivationKind.BASE2:
            return tuple(0.0 if s == 0 else s * 2.0 ** e for e, s in zip(self.exponents, self.signs))
        raise ValueError(f"{self.kind.value} is not a polynomial activation")

    def to_text(self) -> str:
        if self.kind is ActivationKind.POLY:
            return f"poly:{','.join(repr(float(c)) for c in self.coefficients)}"
        if self.kind is ActivationKind.BASE2:
            terms = ",".join(f"{s}:{e}" for e, s in zip(self.exponents, self.signs))
            return f"base2:{terms}"
        return self.kind.value

    @classmethod
    def from_text(cls, text: str) -> "ActivationSpec":
        kind, _, body = text.strip().partition(":")
        if kind == ActivationKind.POLY.value:
            return cls(kind=ActivationKind.POLY, coefficients=[float(c) for c in body.split(",")])
        if kind == ActivationKind.BASE2.value:
            pairs = [term.split(":") for term in body.split(",")]
            return cls(
                kind=ActivationKind.BASE2,
                signs=[int(s) for s, _ in pairs],
                exponents=[int(e) for _, e in pairs],
            )
        return cls(kind=ActivationKind(kind))


class ActivationVariant(str, Enum):
    """Named (hidden, output) activation pairs"""
    SQUARE = "square"
    SWISH_POLY = "swish-poly"
    SWISH_QUANT = "swish-quant"
    RELU_SIGMOID = "relu-sigmoid"


# minimax swish on [-4, 4] and the reference base-2 counterpart 2^-3 x^2 + 2^-1 x + 2^-4, ascending powers.
# The local scan at its default bound prefers 2^-3 for the constant; pass its tuple through
# TrainConfig.swish_exponents or `train --swish-exponents` to use it.
SWISH_POLY_COEFFICIENTS = (0.153613744, 0.5, 0.12050344)
SWISH_BASE2_EXPONENTS = (-4, -1, -3)


def variant_activations(variant: ActivationVariant,
                        base2: Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]] = None,
                        poly: Optional[Tuple[float, ...]] = None) -> Tuple[ActivationSpec, ActivationSpec]:
    """
    Hidden and output activation for a named variant

    Args:
        variant: Variant name
        base2: Optional (exponents, signs) overriding the reference quantized swish,
            e.g. the tuple returned by base2_scan
        poly: Optional real coefficients overriding the minimax swish

    Returns:
        (hidden, output) activation specs
    """
    variant = ActivationVariant(variant)
    if variant is ActivationVariant.SQUARE:
        spec = ActivationSpec(kind=ActivationKind.SQUARE)
        return spec, spec
    if variant is ActivationVariant.SWISH_POLY:
        spec = ActivationSpec(kind=ActivationKind.POLY, coefficients=list(poly or SWISH_POLY_COEFFICIENTS))
        return spec, spec
    if variant is ActivationVariant.SWISH_QUANT:
        exponents, signs = base2 or (SWISH_BASE2_EXPONENTS, (1, 1, 1))
        spec = ActivationSpec(kind=ActivationKind.BASE2, exponents=list(exponents), signs=list(signs))
        return spec, spec
    return ActivationSpec(kind=ActivationKind.RELU), ActivationSpec(kind=ActivationKind.SIGMOID)


VARIANT_NAMES: Dict[str, ActivationVariant] = {v.value: v for v in ActivationVariant}
