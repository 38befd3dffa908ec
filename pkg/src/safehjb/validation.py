"""Input validation helpers.

Small checkers in the spirit of ``sklearn.utils.validation``: they coerce
array-likes to float ndarrays and raise ``ValueError`` (or a package error)
with a message naming the offending argument.
"""
from __future__ import annotations

import numpy as np

from .exceptions import NonSPDError


def as_float_array(value, name: str = "array") -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def check_vector(value, size: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a finite 1-D float vector, optionally of fixed length."""
    vec = as_float_array(value, name)
    vec = np.atleast_1d(vec)
    if vec.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {vec.shape}")
    if size is not None and vec.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {vec.shape[0]}")
    return vec


def check_matrix(value, shape: tuple[int, int] | None = None, name: str = "A") -> np.ndarray:
    mat = as_float_array(value, name)
    mat = np.atleast_2d(mat)
    if mat.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {mat.shape}")
    if shape is not None and mat.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {mat.shape}")
    return mat


def check_states(value, n: int, name: str = "X") -> np.ndarray:
    """Coerce to a finite 2-D array of row states with ``n`` columns."""
    arr = as_float_array(value, name)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != n:
        raise ValueError(
            f"{name} must be an array of row states with {n} columns, got shape {arr.shape}"
        )
    return arr


def as_weight_matrix(value, size: int, name: str = "R") -> np.ndarray:
    """Expand a scalar to ``value * I`` and verify symmetric positive definiteness."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(size)
    mat = check_matrix(arr, (size, size), name)
    if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12):
        raise NonSPDError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise NonSPDError(f"{name} must be positive definite") from None
    return mat


def as_psd_weight_matrix(value, size: int, name: str = "Q") -> np.ndarray:
    """Expand a scalar to ``value * I`` and verify symmetric positive semi-definiteness."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(size)
    mat = check_matrix(arr, (size, size), name)
    if not np.allclose(mat, mat.T, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(mat).min() < -1e-12:
        raise ValueError(f"{name} must be positive semi-definite")
    return mat
