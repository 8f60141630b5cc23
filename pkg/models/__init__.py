"""
Data Models Package
Contains all Pydantic models for the PrivaCare pipeline
"""

from .crypto_models import *
from .approx_models import *
from .training_models import *
from .network_models import *
from .data_models import *
from .report_models import *
