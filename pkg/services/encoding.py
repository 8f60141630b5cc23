"""
Encoding Service
Base-2 integer encoder, fixed-point scaling and plaintext-CRT recombination
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from services.polyring import U64, crt_combine

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EncodedPlain:
    """Plaintext polynomial per instance (mod t_j) with its power-of-two scale"""
    coefficients: Tuple[np.ndarray, ...]
    moduli: Tuple[int, ...]
    scale: int = 0

    def __post_init__(self):
        if self.scale < 0:
            raise EncodingRangeError(f"Scale exponent must be non-negative, got {self.scale}")
        if len(self.coefficients) != len(self.moduli):
            raise EncodingError("One coefficient vector per plaintext modulus is required")
        frozen = []
        for coefficients, t in zip(self.coefficients, self.moduli):
            arr = np.ascontiguousarray(coefficients, dtype=U64)
            if np.any(arr >= U64(t)):
                raise EncodingRangeError(f"Plaintext coefficient not reduced mod {t}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "coefficients", tuple(frozen))

    @property
    def n(self) -> int:
        return len(self.coefficients[0])

    def equals(self, other: "EncodedPlain") -> bool:
        return (
            self.scale == other.scale
            and tuple(self.moduli) == tuple(other.moduli)
            and all(np.array_equal(a, b) for a, b in zip(self.coefficients, other.coefficients))
        )


# -- integer encoder ----------------------------------------------------

def encode_int(z: int, t: int, n: int) -> np.ndarray:
    """
    Binary expansion of |z| as polynomial coefficients mod t

    Args:
        z: Signed integer
        t: Plaintext modulus
        n: Ring degree

    Returns:
        Length-n uint64 coefficient vector; set bits become 1, or t-1 when z < 0
    """
    z = int(z)
    magnitude = abs(z)
    if magnitude.bit_length() > n // 2:
        raise EncodingRangeError(f"|{z}| needs {magnitude.bit_length()} bits, limit is {n // 2}")
    coefficients = np.zeros(n, dtype=U64)
    digit = U64(t - 1) if z < 0 else U64(1)
    bit = 0
    while magnitude:
        if magnitude & 1:
            coefficients[bit] = digit
        magnitude >>= 1
        bit += 1
    return coefficients


def centered(values, t: int) -> np.ndarray:
    """Lift residues mod t to (-t/2, t/2] as Python integers"""
    arr = np.asarray(values).astype(object)
    return np.where(arr > t // 2, arr - t, arr)


def evaluate_at_two(coefficients: Sequence[int]) -> int:
    total = 0
    for c in reversed(list(coefficients)):
        total = 2 * total + int(c)
    return total


def decode_int(coefficients, t: int) -> int:
    """Centered lift followed by evaluation at x = 2"""
    return evaluate_at_two(centered(coefficients, t))


def encode_plain(z: int, moduli: Sequence[int], n: int, scale: int = 0) -> EncodedPlain:
    """Integer z encoded in every plaintext-modulus instance"""
    return EncodedPlain(tuple(encode_int(z, t, n) for t in moduli), tuple(moduli), scale)


def encode_monomial(power: int, moduli: Sequence[int], n: int, scale: int = 0,
                    negative: bool = False) -> EncodedPlain:
    """±x^power, the encoding of ±2^power"""
    if not 0 <= power < n:
        raise EncodingRangeError(f"Monomial degree {power} outside [0, {n})")
    vectors = []
    for t in moduli:
        v = np.zeros(n, dtype=U64)
        v[power] = U64(t - 1) if negative else U64(1)
        vectors.append(v)
    return EncodedPlain(tuple(vectors), tuple(moduli), scale)


def shift_encoding(plain: EncodedPlain, power: int) -> EncodedPlain:
    """Multiply an encoding by x^power, i.e. its value by 2^power; no wraparound allowed"""
    vectors = []
    for coefficients in plain.coefficients:
        if power and np.any(coefficients[plain.n - power:]):
            raise EncodingRangeError(f"Shift by x^{power} would wrap past degree {plain.n}")
        vectors.append(np.concatenate([np.zeros(power, dtype=U64), coefficients[:plain.n - power]]))
    return EncodedPlain(tuple(vectors), plain.moduli, plain.scale)


# -- fixed point --------------------------------------------------------

def quantize(r: float, scale_bits: int) -> int:
    """round(r * 2^s) as a Python integer (half away from zero)"""
    scaled = float(r) * (1 << scale_bits)
    if not math.isfinite(scaled):
        raise EncodingRangeError(f"Value {r} is not finite at scale 2^{scale_bits}")
    return int(math.floor(abs(scaled) + 0.5)) * (1 if scaled >= 0 else -1)


def encode_fixed(r: float, scale_bits: int, moduli: Sequence[int], n: int) -> EncodedPlain:
    return encode_plain(quantize(r, scale_bits), moduli, n, scale=scale_bits)


def _as_vectors(values) -> List[np.ndarray]:
    vectors = []
    for v in values:
        arr = np.atleast_1d(np.asarray(v, dtype=object))
        vectors.append(arr)
    return vectors


def decode_crt_integer(values, moduli: Sequence[int] = ()) -> int:
    """
    Combine per-instance plaintexts into the integer they encode

    Args:
        values: Per-instance coefficient vectors (or scalars for constants)
        moduli: Plaintext modulus of each instance

    Returns:
        Centered CRT lift of every coefficient, evaluated at x = 2
    """
    if isinstance(values, EncodedPlain):
        values, moduli = values.coefficients, values.moduli
    vectors = _as_vectors(values)
    if len(vectors) != len(moduli):
        raise CrtIntegrityError(f"{len(vectors)} residue vectors for {len(moduli)} moduli")
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1:
        raise CrtIntegrityError(f"Residue vectors disagree in length: {sorted(lengths)}")
    for v, t in zip(vectors, moduli):
        if any(not 0 <= int(c) < t for c in v):
            raise CrtIntegrityError(f"Residue outside [0, {t})")

    capacity = math.prod(moduli)
    combined = [
        crt_combine([int(v[i]) for v in vectors], moduli) for i in range(lengths.pop())
    ]
    return evaluate_at_two(c - capacity if c > capacity // 2 else c for c in combined)


def decode_fixed(values, exponent: int, moduli: Sequence[int] = ()) -> float:
    """CRT-combine, center, evaluate at two and divide by 2^exponent"""
    if isinstance(values, EncodedPlain):
        values, moduli = values.coefficients, values.moduli
    if exponent < 0:
        raise EncodingRangeError(f"Exponent must be non-negative, got {exponent}")
    return decode_crt_integer(values, moduli) / (1 << exponent)


# -- static capacity analysis -------------------------------------------

@dataclass(frozen=True)
class PlainBound:
    """Bounds on a plaintext polynomial over Z: max |coeff|, sum |coeff|, degree"""
    inf_norm: int
    l1_norm: int
    degree: int

    @classmethod
    def of_integer(cls, z: int) -> "PlainBound":
        magnitude = abs(int(z))
        return cls(1 if magnitude else 0, bin(magnitude).count("1"), max(magnitude.bit_length() - 1, 0))

    @classmethod
    def of_magnitude(cls, limit: int) -> "PlainBound":
        """Bound covering every integer with |z| <= limit"""
        bits = abs(int(limit)).bit_length()
        return cls(1 if bits else 0, bits, max(bits - 1, 0))

    @classmethod
    def of_integers(cls, values: Sequence[int]) -> "PlainBound":
        """Tightest single bound covering every integer in values"""
        bounds = [cls.of_integer(v) for v in values] or [cls(0, 0, 0)]
        return cls(
            max(b.inf_norm for b in bounds),
            max(b.l1_norm for b in bounds),
            max(b.degree for b in bounds),
        )

    def __add__(self, other: "PlainBound") -> "PlainBound":
        return PlainBound(
            self.inf_norm + other.inf_norm,
            self.l1_norm + other.l1_norm,
            max(self.degree, other.degree),
        )

    def __mul__(self, other: "PlainBound") -> "PlainBound":
        return PlainBound(
            min(self.inf_norm * other.l1_norm, self.l1_norm * other.inf_norm),
            self.l1_norm * other.l1_norm,
            self.degree + other.degree,
        )

    def times(self, count: int) -> "PlainBound":
        """Bound of a sum of count terms each within this bound"""
        return PlainBound(self.inf_norm * count, self.l1_norm * count, self.degree)

    def shift(self, power: int) -> "PlainBound":
        return PlainBound(self.inf_norm, self.l1_norm, self.degree + power)


def check_capacity(stages: Sequence[Tuple[str, PlainBound]], moduli: Sequence[int], n: int) -> None:
    """Raise CapacityError naming the first stage whose plaintext can leave the decodable range"""
    capacity = math.prod(moduli)
    for name, bound in stages:
        if 2 * bound.inf_norm >= capacity:
            logger.error(f"Capacity check failed at {name}: coefficient bound 2^{bound.inf_norm.bit_length()}")
            raise CapacityError(
                f"Stage '{name}': coefficient bound of {bound.inf_norm.bit_length()} bits exceeds "
                f"half the plaintext capacity ({capacity.bit_length()} bits)"
            )
        if bound.degree >= n:
            logger.error(f"Capacity check failed at {name}: degree {bound.degree} >= n={n}")
            raise CapacityError(
                f"Stage '{name}': polynomial degree {bound.degree} wraps around ring degree {n}"
            )


class EncodingError(Exception):
    """Custom exception for plaintext encoding errors"""
    pass


class EncodingRangeError(EncodingError):
    """Value does not fit the encoder"""
    pass


class CrtIntegrityError(EncodingError):
    """Per-instance residues are inconsistent"""
    pass


class CapacityError(EncodingError):
    """Circuit output can exceed the plaintext capacity"""
    pass
