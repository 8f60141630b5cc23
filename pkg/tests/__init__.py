"""
Tests Package
Contains all test modules for the PrivaCare pipeline
"""
