"""Symmetrization, derandomization, capacity estimates and channel nets."""
