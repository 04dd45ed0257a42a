"""Quantum-dot spin-heat engine simulator."""

__version__ = "0.1.0"
