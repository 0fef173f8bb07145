"""Quantum lattice-Boltzmann simulation with bounce-back boundaries and momentum-exchange force measurement."""

__version__ = "0.1.0"
