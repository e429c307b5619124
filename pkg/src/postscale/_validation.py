"""Input validation helpers used by parsers and the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import InputDomainError


def as_float_vector(values, name: str) -> np.ndarray:
    """Coerce to a finite 1-d float array, raising on bad shape or values."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InputDomainError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputDomainError(f"{name} contains non-finite values")
    return arr


def as_compute_vector(X) -> np.ndarray:
    """Coerce estimator input X (n,) or (n, 1) to a 1-d compute vector."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise InputDomainError(
            f"expected a single compute column, got shape {np.shape(X)}"
        )
    if not np.all(np.isfinite(arr)):
        raise InputDomainError("compute values must be finite")
    if np.any(arr < 0):
        raise InputDomainError("compute values must be nonnegative")
    return arr


def check_nondecreasing(arr: np.ndarray, name: str) -> None:
    if arr.size > 1 and np.any(np.diff(arr) < 0):
        idx = int(np.argmax(np.diff(arr) < 0)) + 1
        raise InputDomainError(f"{name} must be nondecreasing (violated at index {idx})")


def check_increasing(arr: np.ndarray, name: str) -> None:
    if arr.size > 1 and np.any(np.diff(arr) <= 0):
        idx = int(np.argmax(np.diff(arr) <= 0)) + 1
        raise InputDomainError(
            f"{name} must be strictly increasing (violated at index {idx})"
        )
