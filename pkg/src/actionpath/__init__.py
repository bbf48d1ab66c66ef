"""Actionable improvement-path planning over a regression model via a
hierarchical Bayesian mixture surrogate."""

__version__ = "0.1.0"
