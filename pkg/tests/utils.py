"""Test helpers."""

import numpy as np
from numpy.testing import assert_allclose

from qavc.core import qmath
from qavc.core.channel import Channel


def assert_density(m: np.ndarray, tol: float = 1e-10) -> None:
    """m is Hermitian, positive and of unit trace within tol."""
    assert qmath.is_hermitian(m, tol)
    assert np.linalg.eigvalsh(m).min() >= -tol
    assert abs(np.trace(m) - 1) <= tol


def assert_trace_preserving(n: Channel, tol: float = 1e-9) -> None:
    """sum K^dag K = 1 within tol."""
    total = sum(k.conj().T @ k for k in n.kraus)
    assert_allclose(total, np.eye(n.in_total), atol=tol)


def binary_entropy(p: float) -> float:
    """h(p) in bits."""
    if p in (0.0, 1.0):
        return 0.0
    return float(-p * np.log2(p) - (1 - p) * np.log2(1 - p))
