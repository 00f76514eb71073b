"""Conditional inference after specification tests: statistics, estimators,
Monte Carlo engine and a Gaussian correlation inequality checker."""

__version__ = "0.1.0"
