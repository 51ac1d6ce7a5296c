"""Input validation helpers used across ops and the estimator facade."""

from __future__ import annotations

import numpy as np


def as_float_array(data, name: str = "data") -> np.ndarray:
    """Coerce to a float32 ndarray, rejecting non-numeric input."""
    arr = np.asarray(data)
    if arr.dtype.kind not in "fiu":
        raise ValueError(f"{name} must be numeric, got dtype {arr.dtype}")
    return arr.astype(np.float32, copy=False)


def check_range01(arr: np.ndarray, name: str = "data") -> None:
    """Reject values outside [0,1] (including NaN); surfaces pipeline bugs early."""
    ok = np.logical_and(arr >= 0.0, arr <= 1.0)
    if not bool(np.all(ok)):
        bad = arr[~ok]
        raise ValueError(
            f"{name} has {bad.size} value(s) outside [0,1], e.g. {bad.flat[0]!r}"
        )


def check_channels(arr: np.ndarray, channels: int, name: str = "data") -> None:
    if arr.ndim != 3:
        raise ValueError(f"{name} must be H x W x C, got shape {arr.shape}")
    if arr.shape[2] != channels:
        raise ValueError(
            f"{name} must have {channels} channel(s), got {arr.shape[2]}"
        )


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "images") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def check_divisible(value: int, divisor: int, name: str = "size") -> None:
    if value % divisor != 0:
        raise ValueError(f"{name} must be divisible by {divisor}, got {value}")
