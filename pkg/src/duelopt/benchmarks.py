"""Test objectives, each paired with a cheap lower-fidelity variant.

Functions accept a single point ``(d,)`` or a batch ``(n, d)`` in raw
coordinates and return a scalar or ``(n,)`` array to match. Points outside
the declared domain raise ``ValueError``; the lower-fidelity variants may
probe slightly outside it internally, which is part of their definition.

Domain bounds and fidelity constants live in ``data/benchmarks.json`` so
that accidental edits show up as data diffs, not code diffs.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .direct import Box

_DATA = json.loads(
    resources.files("duelopt.data").joinpath("benchmarks.json").read_text()
)

_CURRIN_BOX = Box(np.array(_DATA["currin"]["lower"]), np.array(_DATA["currin"]["upper"]))
_CURRIN_SHIFT = float(_DATA["currin"]["low_fidelity_shift"])
_BOREHOLE_BOX = Box(
    np.array(_DATA["borehole"]["lower"]), np.array(_DATA["borehole"]["upper"])
)
_SYNTH_BOX = Box(np.zeros(1), np.ones(1))


def _prepare(X, box: Box, name: str):
    X = np.asarray(X, dtype=float)
    scalar = X.ndim == 1
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != box.d:
        raise ValueError(f"{name} expects points with {box.d} coordinates")
    tol = 1e-12 * np.maximum(1.0, np.abs(box.upper))
    if np.any(X < box.lower - tol) or np.any(X > box.upper + tol):
        raise ValueError(f"{name} evaluated outside its domain")
    return X, scalar


def _currin_high(X: np.ndarray) -> np.ndarray:
    x1 = X[:, 0]
    x2 = X[:, 1]
    factor = np.ones_like(x2)
    pos = x2 > 0.0
    factor[pos] = 1.0 - np.exp(-0.5 / x2[pos])
    num = 2300.0 * x1**3 + 1900.0 * x1**2 + 2092.0 * x1 + 60.0
    den = 100.0 * x1**3 + 500.0 * x1**2 + 4.0 * x1 + 20.0
    return factor * num / den


def _currin_low(X: np.ndarray) -> np.ndarray:
    s = _CURRIN_SHIFT
    x1 = X[:, 0]
    x2 = X[:, 1]
    up = x2 + s
    dn = np.maximum(x2 - s, 0.0)
    total = np.zeros(len(X))
    for a in (x1 + s, x1 - s):
        for b in (up, dn):
            total += _currin_high(np.column_stack([a, b]))
    return 0.25 * total


def currin(X, fidelity: str = "high"):
    """Two-dimensional rational test function on the unit square.

    The low-fidelity variant averages the four corner evaluations at
    offsets of +-0.05 per coordinate, clamping the lower x2 corner at 0.
    """
    X, scalar = _prepare(X, _CURRIN_BOX, "currin")
    if fidelity == "high":
        vals = _currin_high(X)
    elif fidelity == "low":
        vals = _currin_low(X)
    else:
        raise ValueError(f"unknown fidelity {fidelity!r}")
    return float(vals[0]) if scalar else vals


def _borehole(X: np.ndarray, leading: float, baseline: float) -> np.ndarray:
    r_w = X[:, 0]
    r = X[:, 1]
    T_u = X[:, 2]
    H_u = X[:, 3]
    T_l = X[:, 4]
    H_l = X[:, 5]
    L = X[:, 6]
    K_w = X[:, 7]
    log_term = np.log(r / r_w)
    frac = 2.0 * L * T_u / (log_term * r_w**2 * K_w)
    return leading * T_u * (H_u - H_l) / (log_term * (baseline + frac + T_u / T_l))


def borehole(X, fidelity: str = "high"):
    """Eight-dimensional water-flow model with a cruder low-fidelity form."""
    X, scalar = _prepare(X, _BOREHOLE_BOX, "borehole")
    if fidelity == "high":
        vals = _borehole(X, _DATA["borehole"]["high_leading"], _DATA["borehole"]["high_baseline"])
    elif fidelity == "low":
        vals = _borehole(X, _DATA["borehole"]["low_leading"], _DATA["borehole"]["low_baseline"])
    else:
        raise ValueError(f"unknown fidelity {fidelity!r}")
    return float(vals[0]) if scalar else vals


def synthetic_1d(X):
    """One-dimensional two-bump surface with a unique interior maximum."""
    X, scalar = _prepare(X, _SYNTH_BOX, "synthetic_1d")
    x = X[:, 0]
    vals = 1.5 * np.exp(-0.5 * ((x - 0.23) / 0.045) ** 2)
    vals += 2.2 * np.exp(-0.5 * ((x - 0.67) / 0.09) ** 2)
    if scalar:
        return float(vals[0])
    return vals


_REGISTRY = {
    "currin": (
        lambda X: _currin_high(_prepare(X, _CURRIN_BOX, "currin")[0]),
        lambda X: _currin_low(_prepare(X, _CURRIN_BOX, "currin")[0]),
        _CURRIN_BOX,
    ),
    "borehole": (
        lambda X: _borehole(
            _prepare(X, _BOREHOLE_BOX, "borehole")[0],
            _DATA["borehole"]["high_leading"],
            _DATA["borehole"]["high_baseline"],
        ),
        lambda X: _borehole(
            _prepare(X, _BOREHOLE_BOX, "borehole")[0],
            _DATA["borehole"]["low_leading"],
            _DATA["borehole"]["low_baseline"],
        ),
        _BOREHOLE_BOX,
    ),
    "synthetic1d": (
        lambda X: synthetic_1d(np.atleast_2d(np.asarray(X, dtype=float))),
        lambda X: synthetic_1d(np.atleast_2d(np.asarray(X, dtype=float))),
        _SYNTH_BOX,
    ),
}


def benchmark_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def benchmark_pair(name: str):
    """Return (expensive, cheap, box) batched callables in raw coordinates."""
    try:
        f, f_c, box = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown benchmark {name!r}; available: {', '.join(benchmark_names())}"
        ) from None
    return f, f_c, box


def benchmark_box(name: str) -> Box:
    return benchmark_pair(name)[2]
