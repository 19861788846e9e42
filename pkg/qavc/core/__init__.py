"""Matrices, channels, codes and the errors they raise."""
