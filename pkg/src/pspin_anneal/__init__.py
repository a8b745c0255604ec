"""Quantum and simulated annealing of the ferromagnetic p-spin model."""

__version__ = "0.1.0"
