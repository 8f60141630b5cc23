"""
Polynomial Ring Service
Residue-number-system arithmetic in Z_q[x]/(x^n + 1) with NTT multiplication
"""

import logging
import struct
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sympy import isprime

logger = logging.getLogger(__name__)

U64 = np.uint64
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
MAX_MODULUS_BITS = 62

RNS_POLY_MAGIC = b"RNSP"
RNS_POLY_VERSION = 1


class Domain(str, Enum):
    """Representation of a ring element"""
    COEFFICIENT = "coefficient"
    EVALUATION = "evaluation"


def _mul_hi_lo(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Full 128-bit product of uint64 arrays, returned as (high, low) words"""
    a_lo = a & _MASK32
    a_hi = a >> _SHIFT32
    b_lo = b & _MASK32
    b_hi = b >> _SHIFT32

    lo_lo = a_lo * b_lo
    lo_hi = a_lo * b_hi
    hi_lo = a_hi * b_lo
    hi_hi = a_hi * b_hi

    mid = (lo_lo >> _SHIFT32) + (lo_hi & _MASK32) + (hi_lo & _MASK32)
    high = hi_hi + (lo_hi >> _SHIFT32) + (hi_lo >> _SHIFT32) + (mid >> _SHIFT32)
    low = a * b
    return high, low


def _bit_reverse(value: int, bits: int) -> int:
    result = 0
    for _ in range(bits):
        result = (result << 1) | (value & 1)
        value >>= 1
    return result


class Modulus:
    """
    Word-size prime with precomputed Barrett constants. Twiddle tables for
    the length-n negacyclic transform are built on first use and require
    value ≡ 1 (mod 2n).
    """

    def __init__(self, value: int, n: int):
        value = int(value)
        if n < 2 or n & (n - 1):
            raise RingConfigurationError(f"Ring degree must be a power of two >= 2, got {n}")
        if value.bit_length() > MAX_MODULUS_BITS:
            raise RingConfigurationError(
                f"Modulus {value} exceeds {MAX_MODULUS_BITS} bits"
            )
        if not isprime(value):
            raise RingConfigurationError(f"Modulus {value} is not prime")

        self.value = value
        self.n = n
        self.bits = value.bit_length()
        self.barrett_ratio = (1 << (2 * self.bits)) // value
        self.root: Optional[int] = None

    @property
    def ntt_friendly(self) -> bool:
        return (self.value - 1) % (2 * self.n) == 0

    def ensure_tables(self):
        """Build twiddle tables on first use"""
        if self.root is not None:
            return
        if not self.ntt_friendly:
            raise RingConfigurationError(
                f"Modulus {self.value} is not congruent to 1 mod 2n (n={self.n}); "
                f"no negacyclic NTT exists"
            )
        self.root = self._find_root()
        self._build_tables()

    def _find_root(self) -> int:
        """Smallest-generator primitive 2n-th root of unity"""
        p, n = self.value, self.n
        exponent = (p - 1) // (2 * n)
        for candidate in range(2, p):
            root = pow(candidate, exponent, p)
            if pow(root, n, p) == p - 1:
                return root
        raise RingConfigurationError(f"No primitive 2n-th root found for modulus {p}")

    def _build_tables(self):
        p, n = self.value, self.n
        log_n = n.bit_length() - 1
        root_inv = pow(self.root, -1, p)

        powers = [pow(self.root, _bit_reverse(i, log_n), p) for i in range(n)]
        inv_powers = [pow(root_inv, _bit_reverse(i, log_n), p) for i in range(n)]

        self.root_powers = np.array(powers, dtype=U64)
        self.root_powers_shoup = np.array([(w << 64) // p for w in powers], dtype=U64)
        self.inv_root_powers = np.array(inv_powers, dtype=U64)
        self.inv_root_powers_shoup = np.array([(w << 64) // p for w in inv_powers], dtype=U64)

        self.n_inv = pow(n, -1, p)
        self.n_inv_shoup = (self.n_inv << 64) // p

        for arr in (self.root_powers, self.root_powers_shoup,
                    self.inv_root_powers, self.inv_root_powers_shoup):
            arr.setflags(write=False)

    def __repr__(self) -> str:
        return f"Modulus({self.value}, n={self.n})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Modulus) and (self.value, self.n) == (other.value, other.n)

    def __hash__(self) -> int:
        return hash((self.value, self.n))

    # -- word arithmetic -------------------------------------------------

    def add(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        p = U64(self.value)
        s = a + b
        return np.where(s >= p, s - p, s)

    def sub(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        p = U64(self.value)
        return np.where(a >= b, a - b, a + (p - b))

    def neg(self, a: np.ndarray) -> np.ndarray:
        p = U64(self.value)
        return np.where(a == 0, a, p - a)

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Modular product of reduced operands via Barrett reduction"""
        a = np.asarray(a, dtype=U64)
        b = np.asarray(b, dtype=U64)
        p = U64(self.value)
        if self.bits <= 32:
            return (a * b) % p

        k = self.bits
        high, low = _mul_hi_lo(a, b)
        q1 = (high << U64(65 - k)) | (low >> U64(k - 1))
        prod_hi, prod_lo = _mul_hi_lo(q1, np.full_like(q1, U64(self.barrett_ratio)))
        q3 = (prod_hi << U64(63 - k)) | (prod_lo >> U64(k + 1))
        r = low - q3 * p
        r = np.where(r >= p, r - p, r)
        return np.where(r >= p, r - p, r)

    def mul_shoup(self, a: np.ndarray, w, w_shoup) -> np.ndarray:
        """Product with a fixed operand w using its precomputed quotient w_shoup"""
        p = U64(self.value)
        w = np.asarray(w, dtype=U64)
        w_shoup = np.asarray(w_shoup, dtype=U64)
        quotient, _ = _mul_hi_lo(a, np.broadcast_to(w_shoup, a.shape))
        r = a * w - quotient * p
        return np.where(r >= p, r - p, r)

    def reduce(self, values) -> np.ndarray:
        """Reduce arbitrary Python integers (object array or list) into [0, p)"""
        arr = np.asarray(values, dtype=object) % self.value
        return arr.astype(U64)

    # -- transforms ------------------------------------------------------

    def forward(self, a: np.ndarray) -> np.ndarray:
        """Cooley-Tukey negacyclic NTT, natural order in, bit-reversed order out"""
        self.ensure_tables()
        n = self.n
        a = np.array(a, dtype=U64, copy=True)
        m, t = 1, n
        while m < n:
            t //= 2
            blocks = a.reshape(m, 2, t)
            u = blocks[:, 0, :]
            v = self.mul_shoup(
                blocks[:, 1, :],
                self.root_powers[m:2 * m, None],
                self.root_powers_shoup[m:2 * m, None],
            )
            a = np.stack([self.add(u, v), self.sub(u, v)], axis=1).reshape(n)
            m *= 2
        return a

    def inverse(self, a: np.ndarray) -> np.ndarray:
        """Gentleman-Sande inverse of forward, including the n^-1 scaling"""
        self.ensure_tables()
        n = self.n
        a = np.array(a, dtype=U64, copy=True)
        m, t = n, 1
        while m > 1:
            h = m // 2
            blocks = a.reshape(h, 2, t)
            u = blocks[:, 0, :]
            v = blocks[:, 1, :]
            diff = self.mul_shoup(
                self.sub(u, v),
                self.inv_root_powers[h:m, None],
                self.inv_root_powers_shoup[h:m, None],
            )
            a = np.stack([self.add(u, v), diff], axis=1).reshape(n)
            t *= 2
            m = h
        return self.mul_shoup(a, self.n_inv, self.n_inv_shoup)


class RnsBase:
    """Ordered set of pairwise distinct prime moduli sharing ring degree n"""

    def __init__(self, moduli: Sequence[int], n: int):
        values = [int(q) for q in moduli]
        if not values:
            raise RingConfigurationError("RNS base needs at least one modulus")
        if len(set(values)) != len(values):
            raise RingConfigurationError(f"RNS moduli must be distinct: {values}")

        self.n = n
        self.moduli: Tuple[Modulus, ...] = tuple(Modulus(q, n) for q in values)
        self.values: Tuple[int, ...] = tuple(values)
        self.product = 1
        for q in values:
            self.product *= q
        self.bits = self.product.bit_length()

        self._punctured = [self.product // q for q in values]
        self._punctured_inv = np.array(
            [pow(self.product // q % q, -1, q) for q in values], dtype=U64
        )

    def __len__(self) -> int:
        return len(self.moduli)

    def __eq__(self, other) -> bool:
        return isinstance(other, RnsBase) and (self.values, self.n) == (other.values, other.n)

    def __hash__(self) -> int:
        return hash((self.values, self.n))

    def __repr__(self) -> str:
        return f"RnsBase(n={self.n}, moduli={list(self.values)})"

    @cached_property
    def column(self) -> np.ndarray:
        """Moduli as a (k, 1) uint64 column for broadcasting"""
        col = np.array(self.values, dtype=U64)[:, None]
        col.setflags(write=False)
        return col

    def decompose(self, values) -> np.ndarray:
        """Residues of Python integers (any sign) under every modulus, shape (k, len)"""
        arr = np.asarray(values, dtype=object)
        return np.stack([(arr % q).astype(U64) for q in self.values])

    def reconstruct(self, residues: np.ndarray, centered: bool = False) -> np.ndarray:
        """CRT preimage of a (k, len) residue matrix as an object array of Python ints"""
        residues = np.asarray(residues)
        if residues.shape[0] != len(self.moduli):
            raise RingUsageError(
                f"Expected {len(self.moduli)} residue rows, got {residues.shape[0]}"
            )
        total = np.zeros(residues.shape[1:], dtype=object)
        for i, modulus in enumerate(self.moduli):
            row = np.asarray(residues[i], dtype=U64)
            scaled = modulus.mul(row, np.full_like(row, self._punctured_inv[i]))
            total = total + scaled.astype(object) * self._punctured[i]
        total = total % self.product
        if centered:
            half = self.product // 2
            total = np.where(total > half, total - self.product, total)
        return total


@dataclass(frozen=True, eq=False)
class RnsPoly:
    """Ring element stored as a read-only (k, n) residue matrix"""
    base: RnsBase
    residues: np.ndarray
    domain: Domain = Domain.COEFFICIENT

    def __post_init__(self):
        residues = np.ascontiguousarray(self.residues, dtype=U64)
        expected = (len(self.base), self.base.n)
        if residues.shape != expected:
            raise RingUsageError(f"Residue matrix shape {residues.shape} != {expected}")
        residues.setflags(write=False)
        object.__setattr__(self, "residues", residues)

    @property
    def n(self) -> int:
        return self.base.n

    def equals(self, other: "RnsPoly") -> bool:
        return (
            self.base == other.base
            and self.domain == other.domain
            and np.array_equal(self.residues, other.residues)
        )

    def to_integers(self, centered: bool = True) -> np.ndarray:
        """Coefficients lifted to Python integers (coefficient domain only)"""
        if self.domain is not Domain.COEFFICIENT:
            raise RingUsageError("Integer lift requires the coefficient domain")
        return self.base.reconstruct(self.residues, centered=centered)


# -- construction -------------------------------------------------------

def zero_poly(base: RnsBase, domain: Domain = Domain.COEFFICIENT) -> RnsPoly:
    return RnsPoly(base, np.zeros((len(base), base.n), dtype=U64), domain)


def poly_from_integers(values, base: RnsBase) -> RnsPoly:
    """Coefficient-domain element from n Python integers of any sign"""
    values = list(values)
    if len(values) != base.n:
        raise RingUsageError(f"Expected {base.n} coefficients, got {len(values)}")
    return RnsPoly(base, base.decompose(values))


def poly_from_small(values: np.ndarray, base: RnsBase) -> RnsPoly:
    """Coefficient-domain element from small signed int64 coefficients"""
    values = np.asarray(values, dtype=np.int64)
    rows = []
    for q in base.values:
        rows.append(np.where(values < 0, U64(q) - (-values).astype(U64), values.astype(U64)))
    return RnsPoly(base, np.stack(rows))


def random_poly(base: RnsBase, rng: np.random.Generator) -> RnsPoly:
    rows = [rng.integers(0, q, size=base.n, dtype=U64) for q in base.values]
    return RnsPoly(base, np.stack(rows))


# -- operations ---------------------------------------------------------

def _check_compatible(a: RnsPoly, b: RnsPoly, same_domain: bool = True):
    if a.base != b.base:
        raise RingUsageError(f"Mismatched RNS bases: {a.base!r} vs {b.base!r}")
    if same_domain and a.domain != b.domain:
        raise RingUsageError(
            f"Mismatched domains: {a.domain.value} vs {b.domain.value}"
        )


def ntt_transform(p: RnsPoly, direction: str = "forward") -> RnsPoly:
    """Apply the negacyclic NTT (or its inverse) to every residue row"""
    if direction == "forward":
        if p.domain is not Domain.COEFFICIENT:
            raise RingUsageError("Forward NTT requires the coefficient domain")
        rows = [m.forward(p.residues[i]) for i, m in enumerate(p.base.moduli)]
        return RnsPoly(p.base, np.stack(rows), Domain.EVALUATION)
    if direction == "inverse":
        if p.domain is not Domain.EVALUATION:
            raise RingUsageError("Inverse NTT requires the evaluation domain")
        rows = [m.inverse(p.residues[i]) for i, m in enumerate(p.base.moduli)]
        return RnsPoly(p.base, np.stack(rows), Domain.COEFFICIENT)
    raise RingUsageError(f"Unknown transform direction: {direction}")


def to_domain(p: RnsPoly, domain: Domain) -> RnsPoly:
    if p.domain is domain:
        return p
    return ntt_transform(p, "forward" if domain is Domain.EVALUATION else "inverse")


def _rowwise(a: RnsPoly, op: str, b: Optional[RnsPoly] = None) -> np.ndarray:
    rows = []
    for i, modulus in enumerate(a.base.moduli):
        fn = getattr(modulus, op)
        rows.append(fn(a.residues[i]) if b is None else fn(a.residues[i], b.residues[i]))
    return np.stack(rows)


def poly_add(a: RnsPoly, b: RnsPoly) -> RnsPoly:
    _check_compatible(a, b)
    return RnsPoly(a.base, _rowwise(a, "add", b), a.domain)


def poly_sub(a: RnsPoly, b: RnsPoly) -> RnsPoly:
    _check_compatible(a, b)
    return RnsPoly(a.base, _rowwise(a, "sub", b), a.domain)


def poly_neg(a: RnsPoly) -> RnsPoly:
    return RnsPoly(a.base, _rowwise(a, "neg"), a.domain)


def poly_pointwise(a: RnsPoly, b: RnsPoly) -> RnsPoly:
    """Coefficient-wise product; the ring product when both are in the evaluation domain"""
    _check_compatible(a, b)
    return RnsPoly(a.base, _rowwise(a, "mul", b), a.domain)


def poly_scale(a: RnsPoly, scalar: int) -> RnsPoly:
    """Multiply by an integer constant (any sign, any size)"""
    rows = []
    for i, modulus in enumerate(a.base.moduli):
        c = np.full(a.n, U64(int(scalar) % modulus.value))
        rows.append(modulus.mul(a.residues[i], c))
    return RnsPoly(a.base, np.stack(rows), a.domain)


def naive_negacyclic_product(a: Sequence[int], b: Sequence[int], modulus: int) -> List[int]:
    """Schoolbook O(n^2) product in Z_modulus[x]/(x^n + 1) over Python integers"""
    n = len(a)
    out = [0] * n
    for i in range(n):
        ai = int(a[i])
        if ai == 0:
            continue
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += ai * int(b[j])
            else:
                out[k - n] -= ai * int(b[j])
    return [c % modulus for c in out]


def poly_mul(a: RnsPoly, b: RnsPoly, method: str = "ntt") -> RnsPoly:
    """Negacyclic product, returned in the coefficient domain"""
    _check_compatible(a, b, same_domain=False)
    if method == "ntt":
        fa = to_domain(a, Domain.EVALUATION)
        fb = to_domain(b, Domain.EVALUATION)
        return ntt_transform(poly_pointwise(fa, fb), "inverse")
    if method == "naive":
        ca = to_domain(a, Domain.COEFFICIENT)
        cb = to_domain(b, Domain.COEFFICIENT)
        rows = [
            np.array(
                naive_negacyclic_product(ca.residues[i].tolist(), cb.residues[i].tolist(), q),
                dtype=U64,
            )
            for i, q in enumerate(a.base.values)
        ]
        return RnsPoly(a.base, np.stack(rows))
    raise RingUsageError(f"Unknown multiplication method: {method}")


def negacyclic_shift(a: RnsPoly, power: int) -> RnsPoly:
    """Multiply by x^power (power may exceed n); coefficient domain only"""
    if a.domain is not Domain.COEFFICIENT:
        raise RingUsageError("Monomial shift requires the coefficient domain")
    n = a.n
    power %= 2 * n
    negate = power >= n
    power %= n
    rows = []
    for i, modulus in enumerate(a.base.moduli):
        row = a.residues[i]
        # coefficients that wrap past x^n pick up a sign flip
        shifted = np.concatenate([modulus.neg(row[n - power:]), row[:n - power]])
        rows.append(modulus.neg(shifted) if negate else shifted)
    return RnsPoly(a.base, np.stack(rows))


def mul_pow2(a: RnsPoly, k: int) -> RnsPoly:
    """Multiply by 2^k through k modular doublings (shift-and-reduce)"""
    if k < 0:
        raise RingUsageError(f"Doubling chain length must be non-negative, got {k}")
    column = a.base.column
    residues = a.residues
    for _ in range(k):
        doubled = residues << U64(1)
        residues = np.where(doubled >= column, doubled - column, doubled)
    return RnsPoly(a.base, residues, a.domain)


def rns_decompose(value: int, base: RnsBase) -> List[int]:
    return [int(value) % q for q in base.values]


def rns_reconstruct(residues: Sequence[int], base: RnsBase) -> int:
    """Unique integer in [0, q) with the given residues"""
    if len(residues) != len(base):
        raise RingUsageError(f"Expected {len(base)} residues, got {len(residues)}")
    for r, q in zip(residues, base.values):
        if not 0 <= int(r) < q:
            raise RingUsageError(f"Residue {r} out of range for modulus {q}")
    column = np.array([[int(r)] for r in residues], dtype=U64)
    return int(base.reconstruct(column)[0])


def crt_combine(residues: Sequence[int], moduli: Sequence[int]) -> int:
    """CRT over arbitrary pairwise coprime moduli (no NTT structure needed)"""
    product = 1
    for m in moduli:
        product *= m
    total = 0
    for r, m in zip(residues, moduli):
        punctured = product // m
        total += int(r) * punctured * pow(punctured % m, -1, m)
    return total % product


def generate_ntt_primes(n: int, count: int, bits: int = MAX_MODULUS_BITS,
                        exclude: Sequence[int] = ()) -> List[int]:
    """Largest primes below 2^bits congruent to 1 mod 2n"""
    step = 2 * n
    candidate = ((1 << bits) - 1) // step * step + 1
    if candidate >= 1 << bits:
        candidate -= step
    excluded = set(int(e) for e in exclude)
    found: List[int] = []
    while len(found) < count:
        if candidate < step:
            raise RingConfigurationError(
                f"Ran out of {bits}-bit NTT primes for n={n} after {len(found)}"
            )
        if candidate not in excluded and isprime(candidate):
            found.append(candidate)
        candidate -= step
    logger.debug(f"Generated {count} NTT primes of {bits} bits for n={n}")
    return found


# -- serialization ------------------------------------------------------

_HEADER = struct.Struct("<4sHIHB")


def serialize_poly(p: RnsPoly) -> bytes:
    """Header (n, modulus count, moduli, domain) then little-endian uint64 rows"""
    domain_flag = 0 if p.domain is Domain.COEFFICIENT else 1
    parts = [
        _HEADER.pack(RNS_POLY_MAGIC, RNS_POLY_VERSION, p.n, len(p.base), domain_flag),
        struct.pack(f"<{len(p.base)}Q", *p.base.values),
        p.residues.astype("<u8").tobytes(),
    ]
    return b"".join(parts)


def deserialize_poly(data: bytes, offset: int = 0,
                     base_cache: Optional[dict] = None) -> Tuple[RnsPoly, int]:
    """Parse one polynomial at offset; returns it with the offset just past it"""
    try:
        magic, version, n, k, domain_flag = _HEADER.unpack_from(data, offset)
    except struct.error as e:
        raise RingUsageError(f"Truncated polynomial header: {e}")
    if magic != RNS_POLY_MAGIC or version != RNS_POLY_VERSION:
        raise RingUsageError(f"Bad polynomial header magic={magic!r} version={version}")
    offset += _HEADER.size
    moduli = struct.unpack_from(f"<{k}Q", data, offset)
    offset += 8 * k

    key = (tuple(moduli), n)
    base = base_cache.get(key) if base_cache is not None else None
    if base is None:
        base = RnsBase(moduli, n)
        if base_cache is not None:
            base_cache[key] = base

    size = 8 * k * n
    if len(data) < offset + size:
        raise RingUsageError("Truncated polynomial payload")
    residues = np.frombuffer(data, dtype="<u8", count=k * n, offset=offset).reshape(k, n)
    residues = residues.astype(U64)
    if np.any(residues >= base.column):
        raise RingUsageError("Stored coefficient not reduced by its modulus")
    domain = Domain.COEFFICIENT if domain_flag == 0 else Domain.EVALUATION
    return RnsPoly(base, residues, domain), offset + size


class PolyRingError(Exception):
    """Custom exception for polynomial ring errors"""
    pass


class RingConfigurationError(PolyRingError):
    """Invalid modulus or ring parameters"""
    pass


class RingUsageError(PolyRingError):
    """Operands incompatible with the requested operation"""
    pass
