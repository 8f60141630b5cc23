"""
Utilities Package
Contains logging and settings for the PrivaCare pipeline
"""

from .logging_config import setup_logging, PrivacyLogger, RunLogger, get_logger
