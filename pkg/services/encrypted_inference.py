"""
Encrypted Inference Service
Fixed-point quantization of the network, static capacity analysis, the exact integer
forward pass and the homomorphic evaluation circuit
"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.crypto_models import EncryptionParams, ScaleMeta, StageScale
from models.network_models import ActivationKind, ActivationSpec
from services.encoding import (
    CapacityError, PlainBound, check_capacity, decode_crt_integer, encode_monomial,
    encode_plain, quantize,
)
from services.fvrns import Ciphertext, EvaluationKeys, FvRnsScheme, PublicKey, SecretKey
from services.network import CircuitError, MlpModel, QuantizationError
from services.polyring import Domain

logger = logging.getLogger(__name__)

WEIGHT_RANGE_BITS = 8
PATH_SHIFT = "shift"
PATH_GENERIC = "generic"


@dataclass(frozen=True)
class ActivationPlan:
    """Integer realization of one polynomial activation at a given input exponent"""
    spec: ActivationSpec
    input_exponent: int
    output_exponent: int
    # (power j, integer multiplier, plaintext scale) for j >= 1 and the constant (0, value, scale)
    terms: Tuple[Tuple[int, int, int], ...]
    constant: int

    @property
    def max_power(self) -> int:
        return max((j for j, _, _ in self.terms), default=0)

    def apply(self, z: int) -> int:
        """Exact integer activation: value * 2^output_exponent"""
        if self.spec.kind is ActivationKind.SQUARE:
            return z * z
        total = self.constant
        for power, multiplier, _ in self.terms:
            total += multiplier * z ** power
        return total


def plan_activation(spec: ActivationSpec, input_exponent: int, weight_bits: int) -> ActivationPlan:
    """
    Common output exponent and integer multipliers for an activation

    Args:
        spec: Polynomial activation (square, poly or base2)
        input_exponent: Exponent S of the incoming fixed-point value
        weight_bits: Fixed-point bits for real polynomial coefficients

    Returns:
        ActivationPlan whose terms all land on one exponent
    """
    s = input_exponent
    if spec.kind is ActivationKind.SQUARE:
        return ActivationPlan(spec, s, 2 * s, ((2, 1, 0),), 0)

    if spec.kind is ActivationKind.BASE2:
        active = [(j, e, sign) for j, (e, sign) in enumerate(zip(spec.exponents, spec.signs)) if sign]
        if not any(j >= 1 for j, _, _ in active):
            raise QuantizationError("Base-2 activation has no non-constant term")
        candidates = [j * s - min(e, 0) for j, e, _ in active if j >= 1]
        candidates += [max(-e, 0) for j, e, _ in active if j == 0]
        out = max(candidates)
        terms = tuple(
            (j, sign * (1 << (e + out - j * s)), out - j * s) for j, e, sign in active if j >= 1
        )
        constant = sum(sign * (1 << (e + out)) for j, e, sign in active if j == 0)
        return ActivationPlan(spec, s, out, terms, constant)

    if spec.kind is ActivationKind.POLY:
        coefficients = [quantize(c, weight_bits) for c in spec.coefficients]
        n = len(coefficients) - 1
        if not any(coefficients[1:]):
            raise QuantizationError("Polynomial activation has no non-constant term at this precision")
        out = weight_bits + n * s
        terms = tuple(
            (j, c << ((n - j) * s), weight_bits + (n - j) * s)
            for j, c in enumerate(coefficients) if j >= 1 and c
        )
        return ActivationPlan(spec, s, out, terms, coefficients[0] << (n * s))

    raise QuantizationError(f"Activation {spec.kind.value} has no polynomial realization")


@dataclass(frozen=True)
class EncryptedModel:
    """Fixed-point network ready for homomorphic evaluation"""
    w1: Tuple[Tuple[int, ...], ...]
    b1: Tuple[int, ...]
    w2: Tuple[int, ...]
    b2: int
    hidden: ActivationSpec
    output: ActivationSpec
    scale: ScaleMeta
    use_bias: bool = True
    params_digest: Optional[str] = None

    @property
    def input_dim(self) -> int:
        return len(self.w1)

    @property
    def hidden_units(self) -> int:
        return len(self.b1)

    @property
    def hidden_plan(self) -> ActivationPlan:
        return plan_activation(self.hidden, self.scale.input_bits + self.scale.weight_bits,
                               self.scale.weight_bits)

    @property
    def output_plan(self) -> ActivationPlan:
        return plan_activation(self.output, self.hidden_plan.output_exponent + self.scale.weight_bits,
                               self.scale.weight_bits)

    def to_payload(self) -> dict:
        return {
            "w1": [list(row) for row in self.w1],
            "b1": list(self.b1),
            "w2": list(self.w2),
            "b2": self.b2,
            "hidden": self.hidden.model_dump(mode="json"),
            "output": self.output.model_dump(mode="json"),
            "scale": self.scale.model_dump(mode="json"),
            "use_bias": self.use_bias,
            "params_digest": self.params_digest,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "EncryptedModel":
        return cls(
            w1=tuple(tuple(int(v) for v in row) for row in payload["w1"]),
            b1=tuple(int(v) for v in payload["b1"]),
            w2=tuple(int(v) for v in payload["w2"]),
            b2=int(payload["b2"]),
            hidden=ActivationSpec.model_validate(payload["hidden"]),
            output=ActivationSpec.model_validate(payload["output"]),
            scale=ScaleMeta.model_validate(payload["scale"]),
            use_bias=bool(payload["use_bias"]),
            params_digest=payload.get("params_digest"),
        )

    def digest(self) -> str:
        payload = json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _quantize_weight(w: float, bits: int) -> int:
    if not np.isfinite(w):
        raise QuantizationError(f"Weight {w} is not finite")
    if abs(w) >= (1 << WEIGHT_RANGE_BITS):
        raise QuantizationError(f"Weight {w} outside the fixed-point range +/-2^{WEIGHT_RANGE_BITS}")
    return quantize(w, bits)


# -- static capacity ----------------------------------------------------

def _activation_bound(plan: ActivationPlan, z: PlainBound) -> PlainBound:
    if plan.spec.kind is ActivationKind.SQUARE:
        return z * z
    powers = {1: z}
    for j in range(2, plan.max_power + 1):
        powers[j] = powers[j - 1] * z
    total = PlainBound.of_integer(plan.constant)
    for power, multiplier, _ in plan.terms:
        total = total + powers[power] * PlainBound.of_integer(multiplier)
    return total


def _widest(bounds: Sequence[PlainBound]) -> PlainBound:
    return PlainBound(
        max(b.inf_norm for b in bounds),
        max(b.l1_norm for b in bounds),
        max(b.degree for b in bounds),
    )


def capacity_stages(emodel: EncryptedModel, input_limit: int) -> List[Tuple[str, PlainBound]]:
    """
    Plaintext growth at each circuit stage for inputs with |x_q| <= input_limit

    Args:
        emodel: Quantized model
        input_limit: Bound on quantized input integers

    Returns:
        [(stage name, bound)] for layer1, act1, layer2, act2
    """
    x = PlainBound.of_magnitude(input_limit)
    s0 = emodel.scale.input_bits
    hidden, output = emodel.hidden_plan, emodel.output_plan

    z1, a1 = [], []
    for k in range(emodel.hidden_units):
        z = PlainBound.of_integer(emodel.b1[k]).shift(s0)
        for i in range(emodel.input_dim):
            z = z + PlainBound.of_integer(emodel.w1[i][k]) * x
        z1.append(z)
        a1.append(_activation_bound(hidden, z))

    z2 = PlainBound.of_integer(emodel.b2).shift(hidden.output_exponent)
    for k in range(emodel.hidden_units):
        z2 = z2 + PlainBound.of_integer(emodel.w2[k]) * a1[k]
    a2 = _activation_bound(output, z2)
    return [("layer1", _widest(z1)), ("act1", _widest(a1)), ("layer2", z2), ("act2", a2)]


def check_model_capacity(emodel: EncryptedModel, params: EncryptionParams, input_limit: Optional[int] = None) -> None:
    limit = input_limit if input_limit is not None else 1 << emodel.scale.input_bits
    try:
        check_capacity(capacity_stages(emodel, limit), params.plain_moduli, params.ring_dimension)
    except CapacityError as e:
        raise QuantizationError(f"Capacity check failed: {str(e)}")


def _scale_schedule(input_bits: int, weight_bits: int, hidden: ActivationSpec,
                    output: ActivationSpec) -> ScaleMeta:
    s1 = input_bits + weight_bits
    e1 = plan_activation(hidden, s1, weight_bits).output_exponent
    e2 = plan_activation(output, e1 + weight_bits, weight_bits).output_exponent
    return ScaleMeta(
        input_bits=input_bits,
        weight_bits=weight_bits,
        stages=[
            StageScale(name="layer1", exponent=s1),
            StageScale(name="act1", exponent=e1),
            StageScale(name="layer2", exponent=e1 + weight_bits),
            StageScale(name="act2", exponent=e2),
        ],
    )


def _annotate(emodel: EncryptedModel, input_limit: int) -> EncryptedModel:
    """Record coefficient growth and degree per stage in the scale schedule"""
    stages = capacity_stages(emodel, input_limit)
    annotated = [
        stage.model_copy(update={"coefficient_bound_bits": bound.inf_norm.bit_length(), "degree": bound.degree})
        for stage, (_, bound) in zip(emodel.scale.stages, stages)
    ]
    return replace(emodel, scale=emodel.scale.model_copy(update={"stages": annotated}))


def quantize_model(model: MlpModel, scale_bits: int = 15, input_bits: Optional[int] = None,
                   params: Optional[EncryptionParams] = None, input_limit: Optional[int] = None) -> EncryptedModel:
    """
    Fixed-point version of a float network

    Args:
        model: Float network with polynomial activations
        scale_bits: Weight precision; weights become round(w * 2^scale_bits)
        input_bits: Input precision (defaults to scale_bits)
        params: When given, the static capacity check runs against these parameters
        input_limit: Bound on quantized inputs for the capacity check (default 2^input_bits)

    Returns:
        EncryptedModel with its scale schedule
    """
    input_bits = scale_bits if input_bits is None else input_bits
    for spec in (model.hidden, model.output):
        if not spec.is_polynomial:
            raise QuantizationError(f"Activation {spec.kind.value} cannot be evaluated homomorphically")

    parts = {
        "w1": tuple(tuple(_quantize_weight(w, scale_bits) for w in row) for row in model.w1),
        "b1": tuple(_quantize_weight(b, scale_bits) for b in model.b1),
        "w2": tuple(_quantize_weight(w, scale_bits) for w in model.w2),
        "b2": _quantize_weight(model.b2, scale_bits),
    }
    scale = _scale_schedule(input_bits, scale_bits, model.hidden, model.output)
    emodel = EncryptedModel(
        hidden=model.hidden, output=model.output, scale=scale, use_bias=model.use_bias,
        params_digest=params.digest() if params is not None else None, **parts,
    )

    limit = input_limit if input_limit is not None else 1 << input_bits
    emodel = _annotate(emodel, limit)
    if params is not None:
        check_model_capacity(emodel, params, limit)
    logger.info(
        f"Quantized model: d={emodel.input_dim}, h={emodel.hidden_units}, "
        f"exponents {[s.exponent for s in scale.stages]}"
    )
    return emodel


def swap_activations(emodel: EncryptedModel, hidden: ActivationSpec, output: ActivationSpec) -> EncryptedModel:
    """Same quantized weights under other activations, with a rebuilt scale schedule"""
    for spec in (hidden, output):
        if not spec.is_polynomial:
            raise QuantizationError(f"Activation {spec.kind.value} cannot be evaluated homomorphically")
    scale = _scale_schedule(emodel.scale.input_bits, emodel.scale.weight_bits, hidden, output)
    swapped = replace(emodel, hidden=hidden, output=output, scale=scale)
    return _annotate(swapped, 1 << scale.input_bits)


# -- integer oracle -----------------------------------------------------

def quantize_inputs(x: Sequence[float], input_bits: int) -> List[int]:
    return [quantize(v, input_bits) for v in np.asarray(x, dtype=np.float64).reshape(-1)]


def quantized_forward_int(emodel: EncryptedModel, xq: Sequence[int]) -> Tuple[int, int]:
    """
    Fixed-point forward pass in exact integer arithmetic

    Returns:
        (integer score, exponent); the real score is integer / 2^exponent
    """
    if len(xq) != emodel.input_dim:
        raise CircuitError(f"Expected {emodel.input_dim} inputs, got {len(xq)}")
    s0 = emodel.scale.input_bits
    hidden, output = emodel.hidden_plan, emodel.output_plan
    a1 = []
    for k in range(emodel.hidden_units):
        z = sum(emodel.w1[i][k] * int(xq[i]) for i in range(emodel.input_dim)) + (emodel.b1[k] << s0)
        a1.append(hidden.apply(z))
    z2 = sum(w * a for w, a in zip(emodel.w2, a1)) + (emodel.b2 << hidden.output_exponent)
    return output.apply(z2), output.output_exponent


def quantized_forward(emodel: EncryptedModel, x: Sequence[float]) -> float:
    value, exponent = quantized_forward_int(emodel, quantize_inputs(x, emodel.scale.input_bits))
    return value / (1 << exponent)


def quantized_scores(emodel: EncryptedModel, x: np.ndarray) -> np.ndarray:
    return np.array([quantized_forward(emodel, row) for row in np.atleast_2d(x)])


# -- homomorphic circuit ------------------------------------------------

def encrypt_features(scheme: FvRnsScheme, pk: PublicKey, x: Sequence[float], input_bits: int = 15,
                     seed: Optional[int] = None) -> List[Ciphertext]:
    """One ciphertext per feature at the input scale"""
    params = scheme.params
    sampler = scheme.make_sampler(seed)
    return [
        scheme.encrypt(encode_plain(v, params.plain_moduli, params.ring_dimension, scale=input_bits), pk, sampler)
        for v in quantize_inputs(x, input_bits)
    ]


@dataclass(frozen=True)
class EncryptedScore:
    ciphertext: Ciphertext
    exponent: int


class EncryptedCircuit:
    """
    Homomorphic evaluation of an EncryptedModel.

    path selects how base-2 activations multiply by their power-of-two monomials:
    'shift' uses rotations and doubling chains, 'generic' full plaintext products.
    """

    def __init__(self, scheme: FvRnsScheme, evk: EvaluationKeys, path: str = PATH_SHIFT, workers: int = 1):
        if path not in (PATH_SHIFT, PATH_GENERIC):
            raise CircuitError(f"Unknown activation path: {path}")
        self.scheme = scheme
        self.evk = evk
        self.path = path
        self.workers = workers
        self.moduli = scheme.params.plain_moduli
        self.n = scheme.params.ring_dimension

    def _plain(self, value: int, scale: int):
        return encode_plain(value, self.moduli, self.n, scale=scale)

    def _expect_scale(self, ct: Ciphertext, exponent: int, where: str):
        if ct.scale != exponent:
            raise CircuitError(f"{where}: ciphertext at 2^{ct.scale}, schedule expects 2^{exponent}")

    def linear(self, inputs: Sequence[Ciphertext], weights: Sequence[int], bias: int,
               bias_shift: int, weight_bits: int) -> Ciphertext:
        """sum_i w_i * ct_i + bias * 2^bias_shift, accumulated in the evaluation domain"""
        acc = None
        for ct, w in zip(inputs, weights):
            term = self.scheme.mul_plain(ct, self._plain(w, weight_bits))
            acc = term if acc is None else self.scheme.add_ct(acc, term)
        if bias:
            acc = self.scheme.add_plain(acc, self._plain(bias << bias_shift, acc.scale))
        return self.scheme.to_domain(acc, Domain.COEFFICIENT)

    def activation(self, z: Ciphertext, plan: ActivationPlan) -> Ciphertext:
        self._expect_scale(z, plan.input_exponent, "activation input")
        if plan.spec.kind is ActivationKind.SQUARE:
            return self.scheme.mul_ct(z, z, self.evk)

        powers = {1: z}
        for j in range(2, plan.max_power + 1):
            powers[j] = self.scheme.mul_ct(powers[j - 1], z, self.evk)

        acc = None
        for power, multiplier, plain_scale in plan.terms:
            if plan.spec.kind is ActivationKind.BASE2:
                magnitude = abs(multiplier)
                plain = encode_monomial(magnitude.bit_length() - 1, self.moduli, self.n,
                                        scale=plain_scale, negative=multiplier < 0)
                term = self.scheme.mul_plain(powers[power], plain, path=self.path)
            else:
                term = self.scheme.mul_plain(powers[power], self._plain(multiplier, plain_scale))
            self._expect_scale(term, plan.output_exponent, f"activation term x^{power}")
            acc = term if acc is None else self.scheme.add_ct(acc, term)
        if plan.constant:
            acc = self.scheme.add_plain(acc, self._plain(plan.constant, plan.output_exponent))
        return acc

    def _hidden_neuron(self, inputs: List[Ciphertext], emodel: EncryptedModel, k: int) -> Ciphertext:
        weights = [emodel.w1[i][k] for i in range(emodel.input_dim)]
        z = self.linear(inputs, weights, emodel.b1[k], emodel.scale.input_bits, emodel.scale.weight_bits)
        return self.activation(z, emodel.hidden_plan)

    def forward(self, emodel: EncryptedModel, inputs: Sequence[Ciphertext]) -> EncryptedScore:
        """
        Encrypted score of one encrypted feature vector

        Args:
            emodel: Quantized model
            inputs: One ciphertext per feature, at the input exponent

        Returns:
            EncryptedScore carrying the output ciphertext and its exponent
        """
        if len(inputs) != emodel.input_dim:
            raise CircuitError(f"Expected {emodel.input_dim} input ciphertexts, got {len(inputs)}")
        if emodel.params_digest is not None and emodel.params_digest != self.scheme.digest:
            raise CircuitError("Encrypted model was quantized for different encryption parameters")
        for ct in inputs:
            self._expect_scale(ct, emodel.scale.input_bits, "input")

        prepared = [self.scheme.to_domain(ct, Domain.EVALUATION) for ct in inputs]
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                hidden = list(pool.map(lambda k: self._hidden_neuron(prepared, emodel, k),
                                       range(emodel.hidden_units)))
        else:
            hidden = [self._hidden_neuron(prepared, emodel, k) for k in range(emodel.hidden_units)]

        hidden_plan, output_plan = emodel.hidden_plan, emodel.output_plan
        for ct in hidden:
            self._expect_scale(ct, hidden_plan.output_exponent, "hidden activation")

        staged = [self.scheme.to_domain(ct, Domain.EVALUATION) for ct in hidden]
        z2 = self.linear(staged, emodel.w2, emodel.b2, hidden_plan.output_exponent, emodel.scale.weight_bits)
        out = self.activation(z2, output_plan)
        self._expect_scale(out, emodel.scale.output_exponent, "output")
        return EncryptedScore(out, out.scale)


def encrypted_forward(emodel: EncryptedModel, inputs: Sequence[Ciphertext], scheme: FvRnsScheme,
                      evk: EvaluationKeys, path: str = PATH_SHIFT) -> EncryptedScore:
    return EncryptedCircuit(scheme, evk, path).forward(emodel, inputs)


def decrypt_score(scheme: FvRnsScheme, sk: SecretKey, score: EncryptedScore) -> Tuple[int, float]:
    """(integer, real) decoded from an encrypted score"""
    plain = scheme.decrypt(score.ciphertext, sk)
    value = decode_crt_integer(plain)
    return value, value / (1 << score.exponent)
