"""
PrivaCare Private Inference System
Differentially private training and homomorphically encrypted inference for readmission prediction
"""

__version__ = "1.0.0"
__author__ = "PrivaCare Team"
__description__ = "Private readmission risk pipeline with DP-SGD training and FV-RNS encrypted inference"
