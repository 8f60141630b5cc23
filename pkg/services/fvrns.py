"""
FV-RNS Encryption Service
Leveled homomorphic encryption over residue-number-system polynomials
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from sympy import isprime, prevprime

from models.crypto_models import EncryptionParams
from services.encoding import EncodedPlain
from services.polyring import (
    U64, Domain, RnsBase, RnsPoly, PolyRingError, generate_ntt_primes,
    mul_pow2, negacyclic_shift, ntt_transform, poly_add, poly_from_small,
    poly_mul, poly_neg, poly_pointwise, poly_scale, poly_sub, random_poly,
    to_domain, zero_poly,
)

logger = logging.getLogger(__name__)

AUX_MODULUS_BITS = 61
BEHZ_GAMMA = 1 << 61

_op_ids = itertools.count()

PolyPair = Tuple[RnsPoly, RnsPoly]


@dataclass(frozen=True)
class OpCounters:
    """
    Operation lineage per kind as sets of process-unique op ids.

    Merging is a set union, so combining the histories of two operands that
    share ancestors counts every shared operation once. Each set holds only the
    ciphertext's own history.
    """
    ct_mul: FrozenSet[int] = frozenset()
    plain_mul: FrozenSet[int] = frozenset()
    add: FrozenSet[int] = frozenset()

    KINDS = ("ct_mul", "plain_mul", "add")

    def record(self, kind: str) -> "OpCounters":
        return replace(self, **{kind: getattr(self, kind) | {next(_op_ids)}})

    def merge(self, other: "OpCounters") -> "OpCounters":
        return OpCounters(
            ct_mul=self.ct_mul | other.ct_mul,
            plain_mul=self.plain_mul | other.plain_mul,
            add=self.add | other.add,
        )

    @property
    def ct_mul_count(self) -> int:
        return len(self.ct_mul)

    @property
    def plain_mul_count(self) -> int:
        return len(self.plain_mul)

    @property
    def add_count(self) -> int:
        return len(self.add)

    @property
    def multiplicative_count(self) -> int:
        return self.ct_mul_count + self.plain_mul_count

    def counts(self) -> dict:
        return {
            "ct_mul": self.ct_mul_count,
            "plain_mul": self.plain_mul_count,
            "add": self.add_count,
        }

    @classmethod
    def opaque(cls, ct_mul: int = 0, plain_mul: int = 0, add: int = 0) -> "OpCounters":
        """Counters restored from storage: fresh ids, history unknown"""
        def fresh(count: int) -> FrozenSet[int]:
            return frozenset(next(_op_ids) for _ in range(count))
        return cls(ct_mul=fresh(ct_mul), plain_mul=fresh(plain_mul), add=fresh(add))


@dataclass(frozen=True)
class SecretKey:
    polys: Tuple[RnsPoly, ...]
    params_digest: str


@dataclass(frozen=True)
class PublicKey:
    pairs: Tuple[PolyPair, ...]
    params_digest: str


@dataclass(frozen=True)
class EvaluationKeys:
    """Relinearization keys (a_i, g_i) per instance, stored in the evaluation domain"""
    digits: Tuple[Tuple[PolyPair, ...], ...]
    params_digest: str


@dataclass(frozen=True)
class Ciphertext:
    components: Tuple[PolyPair, ...]
    scale: int
    params_digest: str
    counters: OpCounters = field(default_factory=OpCounters)

    def __post_init__(self):
        if self.scale < 0:
            raise CiphertextUsageError(f"Scale exponent must be non-negative, got {self.scale}")

    @property
    def domain(self) -> Domain:
        return self.components[0][0].domain


@dataclass(frozen=True)
class ExpandedCiphertext:
    """Three-component product before relinearization"""
    components: Tuple[Tuple[RnsPoly, RnsPoly, RnsPoly], ...]
    scale: int
    params_digest: str
    counters: OpCounters = field(default_factory=OpCounters)


class NoiseSampler:
    """
    Seeded source of secrets, ephemeral keys, errors and uniform elements.

    error_free and ephemeral_free silence the error and u distributions for
    noiseless closed-form checks.
    """

    def __init__(self, rng: np.random.Generator, std: float, bound: int,
                 error_free: bool = False, ephemeral_free: bool = False):
        self.rng = rng
        self.std = std
        self.bound = bound
        self.error_free = error_free
        self.ephemeral_free = ephemeral_free

    def secret(self, n: int) -> np.ndarray:
        return self.rng.integers(-1, 2, size=n, dtype=np.int64)

    def ephemeral(self, n: int) -> np.ndarray:
        if self.ephemeral_free:
            return np.zeros(n, dtype=np.int64)
        return self.rng.integers(-1, 2, size=n, dtype=np.int64)

    def error(self, n: int) -> np.ndarray:
        """Rounded Gaussian truncated to |e| <= bound by rejection"""
        if self.error_free:
            return np.zeros(n, dtype=np.int64)
        draws = np.rint(self.rng.normal(0.0, self.std, size=n))
        rejected = np.abs(draws) > self.bound
        while rejected.any():
            draws[rejected] = np.rint(self.rng.normal(0.0, self.std, size=int(rejected.sum())))
            rejected = np.abs(draws) > self.bound
        return draws.astype(np.int64)

    def uniform(self, base: RnsBase) -> RnsPoly:
        return random_poly(base, self.rng)


class InstanceContext:
    """Precomputed constants for one plaintext-modulus instance"""

    def __init__(self, params: EncryptionParams, index: int, aux_base: RnsBase):
        self.index = index
        self.n = params.ring_dimension
        self.t = params.plain_moduli[index]
        self.base = RnsBase(params.coeff_moduli[index], self.n)
        for modulus in self.base.moduli:
            modulus.ensure_tables()
        self.q = self.base.product
        self.delta = self.q // self.t
        self.digit_bits = params.relin_base_bits
        self.digit_count = params.relin_digits(index)
        self.aux_base = aux_base

        # rns fast-path decryption constants
        gamma = BEHZ_GAMMA
        self.gamma = gamma
        self.behz_weights = np.array(
            [gamma * self.t * pow(self.q // qi % qi, -1, qi) % qi for qi in self.base.values],
            dtype=U64,
        )
        self.behz_punctured_t = [self.q // qi % self.t for qi in self.base.values]
        self.behz_punctured_gamma = [self.q // qi % gamma for qi in self.base.values]
        self.neg_q_inv_t = (-pow(self.q, -1, self.t)) % self.t
        self.neg_q_inv_gamma = (-pow(self.q, -1, gamma)) % gamma
        self.gamma_inv_t = pow(gamma, -1, self.t)

    def lift_plain(self, coefficients: np.ndarray) -> RnsPoly:
        """Centered lift of a plaintext mod t into R_q"""
        coefficients = np.asarray(coefficients, dtype=U64)
        t = U64(self.t)
        half = U64(self.t // 2)
        rows = []
        for qi in self.base.values:
            negative = coefficients > half
            rows.append(np.where(negative, U64(qi) - (t - coefficients), coefficients))
        return RnsPoly(self.base, np.stack(rows))

    def scaled_plain(self, coefficients: np.ndarray) -> RnsPoly:
        """Delta times the centered plaintext"""
        return poly_scale(self.lift_plain(coefficients), self.delta)


class FvRnsScheme:
    """
    FV-RNS scheme over one or more parallel plaintext-modulus instances
    """

    def __init__(self, params: EncryptionParams):
        validate_params(params)
        self.params = params
        self.digest = params.digest()
        n = params.ring_dimension
        widest = max(params.coeff_modulus(j).bit_length() for j in range(params.instances))
        aux_count = math.ceil((2 * widest + n.bit_length() + 2) / (AUX_MODULUS_BITS - 1))
        try:
            aux_primes = generate_ntt_primes(n, aux_count, bits=AUX_MODULUS_BITS)
            aux_base = RnsBase(aux_primes, n)
            self.contexts = [InstanceContext(params, j, aux_base) for j in range(params.instances)]
        except PolyRingError as e:
            logger.error(f"Invalid encryption parameters: {str(e)}")
            raise ParameterError(f"Invalid encryption parameters: {str(e)}")
        logger.debug(
            f"FV-RNS scheme ready: n={n}, instances={params.instances}, "
            f"aux moduli={aux_count}, digest={self.digest[:12]}"
        )

    # -- helpers ---------------------------------------------------------

    def _check_digest(self, *digests: str):
        for d in digests:
            if d != self.digest:
                raise CiphertextUsageError("Object was created under different encryption parameters")

    def _check_plain(self, plain: EncodedPlain):
        if tuple(plain.moduli) != tuple(self.params.plain_moduli):
            raise CiphertextUsageError(
                f"Plaintext moduli {plain.moduli} do not match scheme {self.params.plain_moduli}"
            )

    def to_domain(self, ct: Ciphertext, domain: Domain) -> Ciphertext:
        if ct.domain is domain:
            return ct
        components = tuple(
            (to_domain(c0, domain), to_domain(c1, domain)) for c0, c1 in ct.components
        )
        return replace(ct, components=components)

    # -- key generation --------------------------------------------------

    def make_sampler(self, seed: Optional[int], **hooks) -> NoiseSampler:
        return NoiseSampler(
            np.random.default_rng(seed), self.params.noise_std, self.params.noise_bound, **hooks
        )

    def keygen(self, seed: Optional[int] = None,
               sampler: Optional[NoiseSampler] = None) -> Tuple[SecretKey, PublicKey, EvaluationKeys]:
        """Secret, public and relinearization keys for every instance"""
        sampler = sampler or self.make_sampler(seed)
        secrets, publics, evks = [], [], []
        for ctx in self.contexts:
            n = ctx.n
            s = poly_from_small(sampler.secret(n), ctx.base)
            p0 = sampler.uniform(ctx.base)
            e = poly_from_small(sampler.error(n), ctx.base)
            p1 = poly_neg(poly_add(poly_mul(s, p0), e))

            s_squared = poly_mul(s, s)
            digits = []
            for i in range(ctx.digit_count):
                a_i = sampler.uniform(ctx.base)
                e_i = poly_from_small(sampler.error(n), ctx.base)
                g_i = poly_add(
                    poly_neg(poly_add(poly_mul(a_i, s), e_i)),
                    poly_scale(s_squared, 1 << (ctx.digit_bits * i)),
                )
                digits.append((ntt_transform(a_i), ntt_transform(g_i)))

            secrets.append(s)
            publics.append((p0, p1))
            evks.append(tuple(digits))

        logger.info(
            f"Generated keys: n={self.params.ring_dimension}, instances={len(self.contexts)}, "
            f"relinearization digits={[len(d) for d in evks]}"
        )
        return (
            SecretKey(tuple(secrets), self.digest),
            PublicKey(tuple(publics), self.digest),
            EvaluationKeys(tuple(evks), self.digest),
        )

    # -- encryption ------------------------------------------------------

    def encrypt(self, plain: EncodedPlain, pk: PublicKey,
                sampler: Optional[NoiseSampler] = None, seed: Optional[int] = None) -> Ciphertext:
        self._check_digest(pk.params_digest)
        self._check_plain(plain)
        sampler = sampler or self.make_sampler(seed)
        components = []
        for ctx, (p0, p1), coefficients in zip(self.contexts, pk.pairs, plain.coefficients):
            n = ctx.n
            u = poly_from_small(sampler.ephemeral(n), ctx.base)
            e1 = poly_from_small(sampler.error(n), ctx.base)
            e2 = poly_from_small(sampler.error(n), ctx.base)
            u_eval = ntt_transform(u)
            p1u = ntt_transform(poly_pointwise(to_domain(p1, Domain.EVALUATION), u_eval), "inverse")
            p0u = ntt_transform(poly_pointwise(to_domain(p0, Domain.EVALUATION), u_eval), "inverse")
            c0 = poly_add(poly_add(ctx.scaled_plain(coefficients), p1u), e1)
            c1 = poly_add(p0u, e2)
            components.append((c0, c1))
        return Ciphertext(tuple(components), plain.scale, self.digest)

    def _phase(self, ctx: InstanceContext, c0: RnsPoly, c1: RnsPoly, s: RnsPoly) -> RnsPoly:
        """[c0 + c1*s]_q in the coefficient domain"""
        c0 = to_domain(c0, Domain.COEFFICIENT)
        return poly_add(c0, poly_mul(c1, s))

    def decrypt(self, ct: Ciphertext, sk: SecretKey, path: str = "reference") -> EncodedPlain:
        """Recover the plaintext of every instance; path is 'reference' or 'rns'"""
        self._check_digest(ct.params_digest, sk.params_digest)
        coefficients = []
        for ctx, (c0, c1), s in zip(self.contexts, ct.components, sk.polys):
            phase = self._phase(ctx, c0, c1, s)
            if path == "reference":
                coefficients.append(self._round_reference(ctx, phase))
            elif path == "rns":
                coefficients.append(self._round_rns(ctx, phase))
            else:
                raise CiphertextUsageError(f"Unknown decryption path: {path}")
        return EncodedPlain(tuple(coefficients), tuple(self.params.plain_moduli), ct.scale)

    @staticmethod
    def _round_reference(ctx: InstanceContext, phase: RnsPoly) -> np.ndarray:
        """round(t*X/q) mod t via full CRT reconstruction"""
        values = phase.to_integers(centered=False)
        rounded = (2 * ctx.t * values + ctx.q) // (2 * ctx.q)
        return (rounded % ctx.t).astype(U64)

    @staticmethod
    def _round_rns(ctx: InstanceContext, phase: RnsPoly) -> np.ndarray:
        """round(t*X/q) mod t by fast base conversion to {t, gamma}"""
        acc_t = np.zeros(ctx.n, dtype=object)
        acc_gamma = np.zeros(ctx.n, dtype=object)
        for i, modulus in enumerate(ctx.base.moduli):
            row = phase.residues[i]
            weighted = modulus.mul(row, np.full_like(row, ctx.behz_weights[i])).astype(object)
            acc_t = acc_t + weighted * ctx.behz_punctured_t[i]
            acc_gamma = acc_gamma + weighted * ctx.behz_punctured_gamma[i]

        s_t = acc_t * ctx.neg_q_inv_t % ctx.t
        s_gamma = acc_gamma * ctx.neg_q_inv_gamma % ctx.gamma
        s_gamma = np.where(s_gamma >= ctx.gamma // 2, s_gamma - ctx.gamma, s_gamma)
        message = (s_t - s_gamma) * ctx.gamma_inv_t % ctx.t
        return message.astype(U64)

    def noise_budget(self, ct: Ciphertext, sk: SecretKey) -> float:
        """Remaining bits before decryption fails (debug only, needs sk); minimum over instances"""
        self._check_digest(ct.params_digest, sk.params_digest)
        budgets = []
        for ctx, (c0, c1), s in zip(self.contexts, ct.components, sk.polys):
            values = self._phase(ctx, c0, c1, s).to_integers(centered=False)
            scaled = values * ctx.t % ctx.q
            scaled = np.where(scaled > ctx.q // 2, ctx.q - scaled, scaled)
            worst = int(max(scaled.max(), 1))
            budgets.append(math.log2(ctx.q) - 1 - math.log2(worst))
        return min(budgets)

    def check_integrity(self, ct: Ciphertext, sk: SecretKey, min_bits: float = 1.0) -> float:
        budget = self.noise_budget(ct, sk)
        if budget < min_bits:
            logger.error(f"Noise budget exhausted: {budget:.2f} bits left")
            raise DecryptionIntegrityError(
                f"Noise budget {budget:.2f} bits is below {min_bits}; decryption is unreliable"
            )
        return budget

    # -- homomorphic arithmetic -----------------------------------------

    def add_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_digest(a.params_digest, b.params_digest)
        if a.scale != b.scale:
            raise ScaleMismatchError(f"Cannot add ciphertexts at scales 2^{a.scale} and 2^{b.scale}")
        if a.domain is not b.domain:
            b = self.to_domain(b, a.domain)
        components = tuple(
            (poly_add(a0, b0), poly_add(a1, b1))
            for (a0, a1), (b0, b1) in zip(a.components, b.components)
        )
        counters = a.counters.merge(b.counters).record("add")
        return Ciphertext(components, a.scale, self.digest, counters)

    def sub_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        negated = replace(b, components=tuple((poly_neg(b0), poly_neg(b1)) for b0, b1 in b.components))
        return self.add_ct(a, negated)

    def add_plain(self, ct: Ciphertext, plain: EncodedPlain) -> Ciphertext:
        self._check_digest(ct.params_digest)
        self._check_plain(plain)
        if plain.scale != ct.scale:
            raise ScaleMismatchError(
                f"Plaintext at scale 2^{plain.scale} added to ciphertext at 2^{ct.scale}"
            )
        components = []
        for ctx, (c0, c1), coefficients in zip(self.contexts, ct.components, plain.coefficients):
            shifted = to_domain(ctx.scaled_plain(coefficients), c0.domain)
            components.append((poly_add(c0, shifted), c1))
        return Ciphertext(tuple(components), ct.scale, self.digest, ct.counters.record("add"))

    def mul_plain(self, ct: Ciphertext, plain: EncodedPlain, path: str = "generic") -> Ciphertext:
        """Multiply by a plaintext; path 'shift' requires a signed power-of-two monomial"""
        self._check_digest(ct.params_digest)
        self._check_plain(plain)
        if path == "generic":
            components = []
            for ctx, (c0, c1), coefficients in zip(self.contexts, ct.components, plain.coefficients):
                m = ntt_transform(ctx.lift_plain(coefficients))
                products = []
                for c in (c0, c1):
                    product = poly_pointwise(to_domain(c, Domain.EVALUATION), m)
                    products.append(to_domain(product, c.domain))
                components.append(tuple(products))
        elif path == "shift":
            power, exponent, negative = self._power_of_two_monomial(plain)
            components = []
            for c0, c1 in ct.components:
                shifted = []
                for c in (c0, c1):
                    r = mul_pow2(negacyclic_shift(to_domain(c, Domain.COEFFICIENT), power), exponent)
                    shifted.append(to_domain(poly_neg(r) if negative else r, c.domain))
                components.append(tuple(shifted))
        else:
            raise CiphertextUsageError(f"Unknown plaintext multiplication path: {path}")
        return Ciphertext(
            tuple(components), ct.scale + plain.scale, self.digest, ct.counters.record("plain_mul")
        )

    def _power_of_two_monomial(self, plain: EncodedPlain) -> Tuple[int, int, bool]:
        """(position j, exponent k, sign) with plain == ±2^k x^j in every instance"""
        found = None
        for coefficients, t in zip(plain.coefficients, plain.moduli):
            nonzero = np.flatnonzero(coefficients)
            if len(nonzero) != 1:
                raise CiphertextUsageError("Shift path needs a single-term plaintext")
            position = int(nonzero[0])
            value = int(coefficients[position])
            if value > t // 2:
                value -= t
            magnitude = abs(value)
            if magnitude & (magnitude - 1):
                raise CiphertextUsageError(f"Shift path needs a power-of-two coefficient, got {value}")
            term = (position, magnitude.bit_length() - 1, value < 0)
            if found is not None and found != term:
                raise CiphertextUsageError("Plaintext instances disagree on the shift monomial")
            found = term
        return found

    def tensor(self, a: Ciphertext, b: Ciphertext) -> ExpandedCiphertext:
        """Scaled tensor product round(t/q * (a x b)) before relinearization"""
        self._check_digest(a.params_digest, b.params_digest)
        components = []
        for ctx, (a0, a1), (b0, b1) in zip(self.contexts, a.components, b.components):
            lifted = [
                to_domain(p, Domain.COEFFICIENT).to_integers(centered=True)
                for p in (a0, a1, b0, b1)
            ]
            aux = [
                ntt_transform(RnsPoly(ctx.aux_base, ctx.aux_base.decompose(v)))
                for v in lifted
            ]
            x0, x1, y0, y1 = aux
            raw = (
                poly_pointwise(x0, y0),
                poly_add(poly_pointwise(x0, y1), poly_pointwise(x1, y0)),
                poly_pointwise(x1, y1),
            )
            scaled = []
            for product in raw:
                exact = ntt_transform(product, "inverse").to_integers(centered=True)
                rounded = (2 * ctx.t * exact + ctx.q) // (2 * ctx.q)
                scaled.append(RnsPoly(ctx.base, ctx.base.decompose(rounded)))
            components.append(tuple(scaled))
        counters = a.counters.merge(b.counters)
        return ExpandedCiphertext(tuple(components), a.scale + b.scale, self.digest, counters)

    def relinearize(self, expanded: ExpandedCiphertext, evk: EvaluationKeys) -> Ciphertext:
        self._check_digest(expanded.params_digest, evk.params_digest)
        components = []
        for ctx, (c0, c1, c2), keys in zip(self.contexts, expanded.components, evk.digits):
            values = c2.to_integers(centered=False)
            mask = (1 << ctx.digit_bits) - 1
            acc0 = zero_poly(ctx.base, Domain.EVALUATION)
            acc1 = zero_poly(ctx.base, Domain.EVALUATION)
            for i, (a_i, g_i) in enumerate(keys):
                digit = ((values >> (ctx.digit_bits * i)) & mask).astype(U64)
                d = ntt_transform(RnsPoly(ctx.base, np.tile(digit, (len(ctx.base), 1))))
                acc0 = poly_add(acc0, poly_pointwise(g_i, d))
                acc1 = poly_add(acc1, poly_pointwise(a_i, d))
            r0 = poly_add(c0, ntt_transform(acc0, "inverse"))
            r1 = poly_add(c1, ntt_transform(acc1, "inverse"))
            components.append((r0, r1))
        return Ciphertext(tuple(components), expanded.scale, self.digest, expanded.counters)

    def mul_ct(self, a: Ciphertext, b: Ciphertext, evk: EvaluationKeys) -> Ciphertext:
        """Ciphertext product, relinearized; scales add"""
        product = self.relinearize(self.tensor(a, b), evk)
        return replace(product, counters=product.counters.record("ct_mul"))

    def decrypt_degree2(self, expanded: ExpandedCiphertext, sk: SecretKey) -> EncodedPlain:
        """Debug decryption of a three-component ciphertext using s^2"""
        self._check_digest(expanded.params_digest, sk.params_digest)
        coefficients = []
        for ctx, (c0, c1, c2), s in zip(self.contexts, expanded.components, sk.polys):
            phase = poly_add(self._phase(ctx, c0, c1, s), poly_mul(c2, poly_mul(s, s)))
            coefficients.append(self._round_reference(ctx, phase))
        return EncodedPlain(tuple(coefficients), tuple(self.params.plain_moduli), expanded.scale)


def generate_params(ring_dimension: int = 8192, plain_bits: int = 59, coeff_bits: int = 62,
                    coeff_count: int = 4, instances: int = 2, relin_base_bits: int = 16,
                    noise_std: float = 3.2) -> EncryptionParams:
    """
    Build a parameter set with NTT-friendly coefficient primes

    Args:
        ring_dimension: Ring degree n
        plain_bits: Bit size of each plaintext prime
        coeff_bits: Bit size of each coefficient prime (at most 62)
        coeff_count: Coefficient primes per instance
        instances: Number of parallel plaintext-modulus instances
        relin_base_bits: log2 of the relinearization base
        noise_std: Error distribution standard deviation

    Returns:
        Validated EncryptionParams
    """
    try:
        primes = generate_ntt_primes(ring_dimension, coeff_count * instances, bits=coeff_bits)
    except PolyRingError as e:
        logger.error(f"Coefficient prime search failed: {str(e)}")
        raise ParameterError(f"Coefficient prime search failed: {str(e)}")
    coeff_moduli = [primes[j * coeff_count:(j + 1) * coeff_count] for j in range(instances)]

    plain_moduli: List[int] = []
    candidate = 1 << plain_bits
    while len(plain_moduli) < instances:
        candidate = prevprime(candidate)
        if candidate <= 2:
            raise ParameterError(f"Not enough {plain_bits}-bit plaintext primes")
        if candidate not in primes:
            plain_moduli.append(int(candidate))

    try:
        params = EncryptionParams(
            ring_dimension=ring_dimension,
            plain_moduli=plain_moduli,
            coeff_moduli=coeff_moduli,
            relin_base_bits=relin_base_bits,
            noise_std=noise_std,
        )
    except ValueError as e:
        logger.error(f"Parameter validation failed: {str(e)}")
        raise ParameterError(f"Parameter validation failed: {str(e)}")
    logger.info(
        f"Parameters: n={ring_dimension}, t bits={[t.bit_length() for t in plain_moduli]}, "
        f"q bits={[params.coeff_modulus(j).bit_length() for j in range(instances)]}"
    )
    return params


def validate_params(params: EncryptionParams) -> None:
    """Primality checks that pydantic validation leaves out"""
    for t in params.plain_moduli:
        if not isprime(t):
            raise ParameterError(f"Plaintext modulus {t} is not prime")


class FvRnsError(Exception):
    """Custom exception for homomorphic encryption errors"""
    pass


class ParameterError(FvRnsError):
    """Encryption parameters are invalid"""
    pass


class CiphertextUsageError(FvRnsError):
    """Operands incompatible with the requested homomorphic operation"""
    pass


class ScaleMismatchError(CiphertextUsageError):
    """Fixed-point scales of operands do not line up"""
    pass


class DecryptionIntegrityError(FvRnsError):
    """Ciphertext noise has outgrown the decryption threshold"""
    pass
