"""Input validation helpers shared across the package."""

import math
from numbers import Integral, Real

import numpy as np


def check_positive(value, name):
    if not isinstance(value, Real) or not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")
    return float(value)


def check_non_negative(value, name, allow_inf=False):
    if not isinstance(value, Real) or math.isnan(value) or value < 0:
        raise ValueError(f"{name} must be non-negative, got {value!r}")
    if not allow_inf and math.isinf(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return float(value)


def check_count(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_sorted_grid(values, name, strict=True):
    """Validate a non-empty ascending grid and return it as a float array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d sequence")
    if np.any(np.isnan(arr)):
        raise ValueError(f"{name} contains NaN")
    diffs = np.diff(arr)
    if strict and np.any(diffs <= 0):
        raise ValueError(f"{name} must be strictly increasing, got {arr.tolist()}")
    if not strict and np.any(diffs < 0):
        raise ValueError(f"{name} must be sorted ascending, got {arr.tolist()}")
    return arr


def as_gap_array(gaps):
    arr = np.asarray(gaps, dtype=float).reshape(-1)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("inter-arrival gaps must be finite and non-negative")
    return arr
