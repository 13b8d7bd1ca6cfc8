"""Provable training data identification: conformal p-values, proportion-scaled BH selection."""

__version__ = "0.1.0"
