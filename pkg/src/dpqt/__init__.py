"""Gaussian-mechanism calibration and privacy-aware query transformations."""

__version__ = "0.1.0"
