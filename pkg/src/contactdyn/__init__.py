"""Equilibria, degeneracies and bifurcations of contact Hamiltonian vector fields."""

__version__ = "0.1.0"
