"""
Shared fixtures: small rings, session-scoped keys and a synthetic dataset
"""

import os
from dataclasses import dataclass

import numpy as np
import pytest

from models.crypto_models import EncryptionParams
from services.data_pipeline import synthesize
from services.fvrns import EvaluationKeys, FvRnsScheme, PublicKey, SecretKey, generate_params


@dataclass
class CryptoContext:
    params: EncryptionParams
    scheme: FvRnsScheme
    sk: SecretKey
    pk: PublicKey
    evk: EvaluationKeys


def _context(n: int, seed: int) -> CryptoContext:
    params = generate_params(ring_dimension=n)
    scheme = FvRnsScheme(params)
    sk, pk, evk = scheme.keygen(seed=seed)
    return CryptoContext(params, scheme, sk, pk, evk)


@pytest.fixture(scope="session")
def crypto16():
    """n = 16 ring with two ~59-bit plaintext instances"""
    return _context(16, seed=11)


@pytest.fixture(scope="session")
def crypto1024():
    """n = 1024 ring, large enough for the fixed-point circuit on small networks"""
    return _context(1024, seed=7)


@pytest.fixture(scope="session")
def crypto8192():
    """Production ring size; only used by slow tests"""
    return _context(8192, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


@pytest.fixture(scope="session")
def planted_dataset():
    """2000 rows, 12 features in [0, 1], roughly 1:9 class ratio"""
    return synthesize(2000, 12, positive_rate=0.1, signal_strength=6.0, seed=5)


@pytest.fixture(scope="session")
def diabetes_csv():
    path = os.environ.get("PRIVACARE_DIABETES_CSV")
    if not path or not os.path.exists(path):
        pytest.skip("PRIVACARE_DIABETES_CSV not set; public diabetes CSV unavailable")
    return path
