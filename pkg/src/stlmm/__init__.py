"""Spatio-temporal linear mixed models with structured covariance solves."""
__version__ = "0.1.0"
