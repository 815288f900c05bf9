"""Hamiltonian flows, shift maps and Kronrod-Reeb graphs of functions on surfaces."""

__version__ = "0.1.0"
