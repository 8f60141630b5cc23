"""
Services Package
Contains the ring arithmetic, encryption, approximation, training and inference services
"""

from .fvrns import FvRnsScheme
from .dpsgd import PrivacyAccountant
from .encrypted_inference import EncryptedCircuit
