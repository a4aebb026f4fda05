"""Anticipatory human-robot collaboration: belief-space planning, simulated humans and Bayesian policy selection."""

__version__ = "0.1.0"
