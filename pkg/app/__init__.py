"""Discrete nonlocal energies, Nehari ground states, and symmetry diagnostics."""

__version__ = "0.1.0"
