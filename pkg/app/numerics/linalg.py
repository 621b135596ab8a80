"""Dense real/complex matrix helpers on top of numpy."""
from __future__ import annotations

import numpy as np

from app.errors import InvalidArgumentError


def as_real_matrix(values: object, name: str = "matrix") -> np.ndarray:
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim != 2:
        raise InvalidArgumentError(f"{name} must be two-dimensional, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return matrix


def as_complex_matrix(values: object, name: str = "matrix") -> np.ndarray:
    matrix = np.asarray(values, dtype=np.complex128)
    if matrix.ndim != 2:
        raise InvalidArgumentError(f"{name} must be two-dimensional, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return matrix


def complex_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_complex_matrix(a, "left operand")
    b = as_complex_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hermitian(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(as_complex_matrix(a)).T
