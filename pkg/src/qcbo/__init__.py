"""Surrogate-guided architecture search for variational quantum classifiers."""

__version__ = "0.1.0"
