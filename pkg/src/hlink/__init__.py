"""Hamiltonian subdivision (linkage) toolkit for digraphs."""

__version__ = "0.1.0"
