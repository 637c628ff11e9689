"""Small input-validation helpers shared by the estimators."""
from __future__ import annotations

import math

import numpy as np
from sklearn.utils import check_array


def check_positive(name, value, strict=True):
    value = float(value)
    ok = value > 0 if strict else value >= 0
    if not (ok and math.isfinite(value)):
        raise ValueError(f"{name} must be {'>' if strict else '>='} 0 and finite, got {value}")
    return value


def check_times(t, name="times", allow_empty=True, sorted_=True, nonneg=True):
    """1-D finite float array; optionally sorted and non-negative."""
    t = np.asarray(t, dtype=float)
    if t.ndim == 2 and t.shape[1] == 1:
        t = t[:, 0]
    t = np.atleast_1d(t)
    if t.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if t.size == 0:
        if not allow_empty:
            raise ValueError(f"{name} must not be empty")
        return t
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} must be finite")
    if sorted_ and np.any(np.diff(t) < 0):
        raise ValueError(f"{name} must be sorted")
    if nonneg and t[0] < 0:
        raise ValueError(f"{name} must be non-negative")
    return t


def check_states(y, n_rows=None, name="values", n_cols=3):
    """``(n, n_cols)`` finite float array (empty allowed)."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return np.zeros((0, n_cols))
    y = check_array(y, ensure_2d=True, dtype=float, input_name=name)
    if y.shape[1] != n_cols:
        raise ValueError(f"{name} must have {n_cols} columns, got {y.shape[1]}")
    if n_rows is not None and y.shape[0] != n_rows:
        raise ValueError(f"{name} has {y.shape[0]} rows, expected {n_rows}")
    return y


def per_channel(value, n, name):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    if not np.all(arr > 0):
        raise ValueError(f"{name} must be > 0 in every channel")
    return arr
