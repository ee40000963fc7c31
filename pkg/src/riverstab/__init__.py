"""Predator invasion in an advective river habitat: eigenvalues, steady states,
stability regimes and simulations."""

__version__ = "0.1.0"
