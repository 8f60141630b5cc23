"""
Benchmark Service
Wallclock and homomorphic op counts of encrypted inference per activation realization
"""

import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.network_models import ActivationKind, ActivationSpec, SWISH_BASE2_EXPONENTS
from models.report_models import BenchRow
from services.encrypted_inference import (
    PATH_GENERIC, PATH_SHIFT, EncryptedCircuit, EncryptedModel, decrypt_score,
    encrypt_features, quantize_inputs, quantized_forward_int, swap_activations,
)
from services.fvrns import EvaluationKeys, FvRnsScheme, PublicKey, SecretKey
from services.network import CircuitError
from utils.logging_config import RunLogger

logger = logging.getLogger(__name__)

BENCH_VARIANTS = ("square", "swish-generic", "swish-shift")


def _quantized_swish(emodel: EncryptedModel) -> ActivationSpec:
    """The model's own base-2 activation, or the default quantized swish"""
    if emodel.hidden.kind is ActivationKind.BASE2:
        return emodel.hidden
    return ActivationSpec(kind=ActivationKind.BASE2, exponents=list(SWISH_BASE2_EXPONENTS), signs=[1, 1, 1])


def bench_variants(emodel: EncryptedModel) -> List[Tuple[str, EncryptedModel, str]]:
    """(name, model, mul_plain path) per variant; weights are shared"""
    square = ActivationSpec(kind=ActivationKind.SQUARE)
    swish = _quantized_swish(emodel)
    swish_model = swap_activations(emodel, swish, swish)
    return [
        ("square", swap_activations(emodel, square, square), PATH_SHIFT),
        ("swish-generic", swish_model, PATH_GENERIC),
        ("swish-shift", swish_model, PATH_SHIFT),
    ]


def bench_encrypted_inference(emodel: EncryptedModel, scheme: FvRnsScheme, pk: PublicKey, evk: EvaluationKeys,
                              x: Sequence[float], trials: int = 3, sk: Optional[SecretKey] = None,
                              workers: int = 1, seed: Optional[int] = 0) -> List[BenchRow]:
    """
    Time encrypted inference of one feature row under each activation variant

    Args:
        emodel: Quantized model providing the shared weights
        scheme: Scheme built from the key parameters
        pk: Public key used to encrypt the row once
        evk: Relinearization keys
        x: Feature row
        trials: Timed repetitions per variant; the median is reported
        sk: When given, every output is checked against the integer forward pass
        workers: Hidden-layer threads (1 for stable comparisons)
        seed: Encryption randomness

    Returns:
        One BenchRow per variant
    """
    if trials < 1:
        raise CircuitError(f"Benchmark needs at least one trial, got {trials}")
    run_logger = RunLogger()
    inputs = encrypt_features(scheme, pk, x, emodel.scale.input_bits, seed=seed)
    xq = quantize_inputs(x, emodel.scale.input_bits)

    rows = []
    for name, variant_model, path in bench_variants(emodel):
        circuit = EncryptedCircuit(scheme, evk, path=path, workers=workers)
        durations, score = [], None
        for trial in range(trials):
            start = time.perf_counter()
            score = circuit.forward(variant_model, inputs)
            durations.append(time.perf_counter() - start)
            logger.debug(f"{name} trial {trial + 1}/{trials}: {durations[-1]:.3f}s")

        if sk is not None:
            value, _ = decrypt_score(scheme, sk, score)
            expected, _ = quantized_forward_int(variant_model, xq)
            if value != expected:
                logger.error(f"{name}: decrypted {value} differs from integer forward {expected}")
                raise CircuitError(f"Variant {name} produced a wrong encrypted result")

        counts = score.ciphertext.counters.counts()
        row = BenchRow(variant=name, trials=trials, median_seconds=float(np.median(durations)), **counts)
        run_logger.log_performance(name, "encrypted_forward", row.median_seconds)
        run_logger.log_counters(name, counts)
        rows.append(row)

    logger.info(
        "Benchmark finished: " + ", ".join(f"{r.variant}={r.median_seconds:.3f}s/{r.multiplicative} mults"
                                           for r in rows)
    )
    return rows
