"""Deterministic dividing-rectangles global search over box domains.

The search normalizes the box to the unit cube, keeps a pool of
hyper-rectangles (center, per-dimension trisection levels, center value),
selects potentially-optimal rectangles via the lower convex hull over
(diameter, value) with the classic 1e-4 relative epsilon, and trisects them
along their longest sides. Everything is index-ordered and deterministic:
two calls with the same objective and budget return identical results, and
a larger budget evaluates a superset of the points of a smaller one.

Objectives and constraints are batched callables mapping an (m, d) array of
points to an (m,) array of values; each evaluated point costs one unit of
the evaluation budget (objective and constraint at the same point count
once).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

_EPS_JONES = 1e-4
_MAX_LEVEL = 220
_POW3 = 3.0 ** -np.arange(_MAX_LEVEL + 2)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with strictly positive widths."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("lower and upper must be 1-d vectors of equal length")
        if not np.all(hi > lo):
            raise ValueError("box must have nonempty interior (upper > lower)")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        tol = 1e-12 * np.maximum(1.0, np.abs(self.widths))
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        if n is None:
            return rng.uniform(self.lower, self.upper)
        return rng.uniform(self.lower, self.upper, size=(n, self.d))

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self.widths

    def denormalize(self, U: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(U, dtype=float) * self.widths


@dataclass
class SearchResult:
    x: np.ndarray
    value: float
    evals: int
    feasible: bool


class _Evaluator:
    """Budgeted batch evaluation with feasibility tracking and penalties."""

    def __init__(self, objective, constraint, box, max_evals):
        self.objective = objective
        self.constraint = constraint
        self.box = box
        self.remaining = int(max_evals)
        self.evals = 0
        self.best_feas_val = -np.inf
        self.best_feas_x = None
        self.best_any_val = -np.inf
        self.best_any_x = box.center
        self._feas_min = None
        self._feas_max = None
        self._raw_min = None
        self._raw_max = None

    def __call__(self, U: np.ndarray):
        """Evaluate unit-cube points; returns internal minimized values, or
        None when the budget truncated the batch (search must stop)."""
        truncated = len(U) > self.remaining
        if truncated:
            U = U[: self.remaining]
        if len(U) == 0:
            return None
        X = self.box.denormalize(U)
        raw = self._batch(self.objective, X)
        raw = np.where(np.isnan(raw), -np.inf, raw)
        self.evals += len(U)
        self.remaining -= len(U)
        if self.constraint is None:
            feas = np.ones(len(U), dtype=bool)
        else:
            feas = self._batch(self.constraint, X) >= 0.0
        finite = np.isfinite(raw)
        if np.any(finite):
            lo, hi = float(raw[finite].min()), float(raw[finite].max())
            self._raw_min = lo if self._raw_min is None else min(self._raw_min, lo)
            self._raw_max = hi if self._raw_max is None else max(self._raw_max, hi)
        feas_fin = feas & finite
        if np.any(feas_fin):
            lo, hi = float(raw[feas_fin].min()), float(raw[feas_fin].max())
            self._feas_min = lo if self._feas_min is None else min(self._feas_min, lo)
            self._feas_max = hi if self._feas_max is None else max(self._feas_max, hi)
        # best trackers (first occurrence wins on ties)
        if np.any(feas):
            i = int(np.argmax(np.where(feas, raw, -np.inf)))
            if raw[i] > self.best_feas_val:
                self.best_feas_val = float(raw[i])
                self.best_feas_x = X[i].copy()
        i = int(np.argmax(raw))
        if raw[i] > self.best_any_val:
            self.best_any_val = float(raw[i])
            self.best_any_x = X[i].copy()
        if truncated:
            return None
        g = -raw
        if not np.all(feas):
            g = np.where(feas, g, -self._penalty())
        return g

    @staticmethod
    def _batch(fn, X: np.ndarray) -> np.ndarray:
        """Evaluate fn over row-batched points; a callable that rejects the
        batch or returns the wrong length (constant surfaces, point-wise
        functions) falls back to a row loop."""
        try:
            vals = np.asarray(fn(X), dtype=float).reshape(-1)
        except (TypeError, ValueError, IndexError):
            vals = None
        if vals is not None and len(vals) == len(X):
            return vals
        return np.array([float(fn(x)) for x in X])

    def _penalty(self) -> float:
        # surrogate for -inf on infeasible points: min probed feasible value
        # minus 10x the probed feasible range (pre-feasible: same over all
        # probed values, minus 1 so a later feasible tie still dominates)
        if self._feas_min is not None:
            return self._feas_min - 10.0 * (self._feas_max - self._feas_min)
        if self._raw_min is not None:
            return self._raw_min - 10.0 * (self._raw_max - self._raw_min) - 1.0
        return -1.0


class _RectPool:
    def __init__(self, d: int, cap: int = 256):
        self.d = d
        self.centers = np.empty((cap, d))
        self.levels = np.zeros((cap, d), dtype=np.int32)
        self.g = np.empty(cap)
        self.lmin = np.empty(cap, dtype=np.int32)
        self.nlong = np.empty(cap, dtype=np.int32)  # dims at the longest side
        self.diam = np.empty(cap)
        self.key = np.empty(cap, dtype=np.int64)
        self.n = 0
        # per diameter-class min-heaps of (g, index); entries go stale when a
        # rectangle is split into a deeper class, so tops are checked against
        # the rectangle's current key before use
        self._heaps: dict[int, list] = {}

    def _grow(self, need: int):
        cap = self.centers.shape[0]
        if self.n + need <= cap:
            return
        new = max(2 * cap, self.n + need)
        self.centers = np.resize(self.centers, (new, self.d))
        self.levels = np.resize(self.levels, (new, self.d))
        self.g = np.resize(self.g, new)
        self.lmin = np.resize(self.lmin, new)
        self.nlong = np.resize(self.nlong, new)
        self.diam = np.resize(self.diam, new)
        self.key = np.resize(self.key, new)

    def _derive(self, i: int):
        lv = self.levels[i]
        lm = int(lv.min())
        na = int(np.count_nonzero(lv == lm))
        self.lmin[i] = lm
        self.nlong[i] = na
        self.diam[i] = 0.5 * _POW3[lm] * np.sqrt(na + (self.d - na) / 9.0)
        k = lm * (self.d + 1) + na
        self.key[i] = k
        heapq.heappush(self._heaps.setdefault(k, []), (float(self.g[i]), i))

    def add(self, center: np.ndarray, levels: np.ndarray, g: float) -> int:
        self._grow(1)
        i = self.n
        self.centers[i] = center
        self.levels[i] = levels
        self.g[i] = g
        self._derive(i)
        self.n = i + 1
        return i

    def potentially_optimal(self) -> np.ndarray:
        """Indices of potentially-optimal rectangles, smallest diameter first."""
        reps_list = []
        dead = []
        for ck, heap in self._heaps.items():
            while heap and self.key[heap[0][1]] != ck:
                heapq.heappop(heap)
            if heap:
                reps_list.append(heap[0][1])
            else:
                dead.append(ck)
        for ck in dead:
            del self._heaps[ck]
        reps = np.asarray(reps_list, dtype=np.intp)
        srt = np.argsort(self.diam[reps], kind="stable")
        reps = reps[srt]
        dv = self.diam[reps]
        gv = self.g[reps]
        k = len(reps)
        if k == 1:
            return reps
        gmin = float(gv.min())
        thresh = gmin - _EPS_JONES * abs(gmin)
        # pairwise slopes between (diameter, value) representatives
        dd = dv[None, :] - dv[:, None]
        gg = gv[None, :] - gv[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            slopes = gg / dd
        keep = np.zeros(k, dtype=bool)
        keep[-1] = True  # largest diameter always qualifies
        for i in range(k - 1):
            left = slopes[i, :i]
            k1 = float(np.max(left)) if i > 0 else -np.inf
            right = slopes[i, i + 1 :]
            k2 = float(np.min(right))
            if k1 > k2 or k2 <= 0.0:
                continue
            if gv[i] - k2 * dv[i] <= thresh:
                keep[i] = True
        return reps[keep]


def _search(objective, constraint, box: Box, max_evals: int) -> SearchResult:
    if max_evals < 1:
        raise ValueError("max_evals must be >= 1")
    ev = _Evaluator(objective, constraint, box, max_evals)
    pool = _RectPool(box.d)
    g0 = ev(np.full((1, box.d), 0.5))
    if g0 is not None:
        pool.add(np.full(box.d, 0.5), np.zeros(box.d, dtype=np.int32), float(g0[0]))
    while ev.remaining > 0 and pool.n > 0:
        po = pool.potentially_optimal()
        tasks = []  # (rect, dims, delta)
        points = []
        for j in po:
            lm = int(pool.lmin[j])
            if lm + 1 >= _MAX_LEVEL:
                continue
            dims = np.flatnonzero(pool.levels[j] == lm)
            delta = _POW3[lm + 1]
            c = pool.centers[j]
            for dim in dims:
                lo = c.copy()
                lo[dim] -= delta
                hi = c.copy()
                hi[dim] += delta
                points.append(lo)
                points.append(hi)
            tasks.append((j, dims, delta))
        if not points:
            break
        g = ev(np.asarray(points))
        if g is None:
            break
        off = 0
        for j, dims, delta in tasks:
            m = len(dims)
            g_lo = g[off : off + 2 * m : 2]
            g_hi = g[off + 1 : off + 2 * m : 2]
            off += 2 * m
            w = np.minimum(g_lo, g_hi)
            order = np.lexsort((dims, w))
            cur = pool.levels[j].copy()
            c = pool.centers[j]
            pool._grow(2 * m)
            for oi in order:
                dim = dims[oi]
                cur[dim] += 1
                lo = c.copy()
                lo[dim] -= delta
                hi = c.copy()
                hi[dim] += delta
                pool.add(lo, cur.copy(), float(g_lo[oi]))
                pool.add(hi, cur.copy(), float(g_hi[oi]))
            pool.levels[j] = cur
            pool._derive(j)
    if ev.best_feas_x is not None:
        return SearchResult(x=ev.best_feas_x, value=ev.best_feas_val,
                            evals=ev.evals, feasible=True)
    return SearchResult(x=ev.best_any_x, value=ev.best_any_val,
                        evals=ev.evals, feasible=False)


def maximize(objective, box: Box, max_evals: int) -> SearchResult:
    """Maximize a batched objective over a box with a fixed evaluation budget."""
    return _search(objective, None, box, max_evals)


def maximize_constrained(objective, constraint, box: Box, max_evals: int) -> SearchResult:
    """Maximize over {x : constraint(x) >= 0}.

    The rectangle search runs on a penalized surface (probed-feasible
    minimum minus 10x the feasible range substitutes for -inf); the result
    is the best feasible evaluated point, or feasible=False with the best
    unconstrained point when nothing feasible was evaluated.
    """
    return _search(objective, constraint, box, max_evals)
