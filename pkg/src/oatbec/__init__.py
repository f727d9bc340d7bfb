"""Simulations of one-axis-twisting spin squeezing driven by spatial dynamics
in two-component condensates: mean-field and truncated-Wigner evolution, a
two-mode Kerr model, and estimators of the effective squeezing parameter."""

__version__ = "0.1.0"
