"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_point(x, d: int | None = None) -> np.ndarray:
    """Coerce to a 1-d float vector, optionally checking its dimension."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if d is not None and x.shape[0] != d:
        raise ValueError(f"expected a {d}-dimensional point, got {x.shape[0]}")
    return x

def as_points(X, d: int | None = None) -> np.ndarray:
    """Coerce to an (n, d) float array; 1-d input becomes a single row."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected a 2-d array of points, got ndim={X.ndim}")
    if d is not None and X.shape[1] != d:
        raise ValueError(f"expected {d}-dimensional points, got {X.shape[1]}")
    return X


def check_matching_lengths(X: np.ndarray, y: np.ndarray):
    if len(X) != len(y):
        raise ValueError(f"X and y length mismatch: {len(X)} vs {len(y)}")
