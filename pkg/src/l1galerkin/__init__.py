"""Linearised L1-Galerkin finite element schemes for time-fractional
reaction-diffusion equations, with verification tooling."""

__version__ = "0.1.0"
