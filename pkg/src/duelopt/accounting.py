"""Query costs, budget enforcement, and regret bookkeeping.

Budget arithmetic runs on exact rationals derived from the decimal text of
each cost, so exhaustion checks and query-count bounds never drift with
float rounding (1.0 buys exactly ten 0.1-cost queries).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

LABEL = "label"
COMPARISON = "comparison"
_KINDS = (LABEL, COMPARISON)


def _exact(value: float) -> Fraction:
    return Fraction(str(float(value)))


@dataclass(frozen=True)
class CostModel:
    """Per-query prices and the total budget, in the same resource units."""

    label_cost: float
    comparison_cost: float
    budget: float

    def __post_init__(self):
        if not 0.0 < self.comparison_cost <= self.label_cost:
            raise ValueError("need 0 < comparison_cost <= label_cost")
        if not self.budget > 0.0:
            raise ValueError("budget must be positive")

    def n_bounds(self) -> tuple[int, int]:
        """(fewest, most) queries a run can make: all-label floor and
        all-comparison ceiling of the budget."""
        budget = _exact(self.budget)
        n_lower = math.floor(budget / _exact(self.label_cost))
        n_upper = math.ceil(budget / _exact(self.comparison_cost))
        return n_lower, n_upper

    def cost_of(self, kind: str) -> float:
        if kind == LABEL:
            return self.label_cost
        if kind == COMPARISON:
            return self.comparison_cost
        raise ValueError(f"unknown query kind {kind!r}")


class Ledger:
    """Debits accepted queries against the budget; the first rejection
    marks the run terminal and everything after is rejected too."""

    def __init__(self, model: CostModel):
        self.model = model
        self._remaining = _exact(model.budget)
        self._costs = {
            LABEL: _exact(model.label_cost),
            COMPARISON: _exact(model.comparison_cost),
        }
        self.terminal = False
        self.n_labels = 0
        self.n_comparisons = 0

    def charge(self, kind: str) -> bool:
        if kind not in _KINDS:
            raise ValueError(f"unknown query kind {kind!r}")
        if self.terminal:
            return False
        cost = self._costs[kind]
        if cost > self._remaining:
            self.terminal = True
            return False
        self._remaining -= cost
        if kind == LABEL:
            self.n_labels += 1
        else:
            self.n_comparisons += 1
        return True

    def affordable(self, kind: str) -> bool:
        return not self.terminal and self._costs[kind] <= self._remaining

    @property
    def total_queries(self) -> int:
        return self.n_labels + self.n_comparisons

    @property
    def remaining(self) -> float:
        return float(self._remaining)

    @property
    def spent(self) -> float:
        return float(_exact(self.model.budget) - self._remaining)


def instantaneous_regret(f, truth, kind: str, x: np.ndarray,
                         x2: np.ndarray | None = None) -> float:
    """Gap to the optimum for one query: labels pay for their point,
    comparisons pay for the better of their two arms."""
    r = truth.value - float(np.asarray(f(np.atleast_2d(x)), dtype=float)[0])
    if kind == LABEL:
        return r
    if kind == COMPARISON:
        if x2 is None:
            raise ValueError("comparison regret needs the opponent point")
        r2 = truth.value - float(np.asarray(f(np.atleast_2d(x2)), dtype=float)[0])
        return min(r, r2)
    raise ValueError(f"unknown query kind {kind!r}")


@dataclass(frozen=True)
class TraceEntry:
    t: int
    kind: str
    x: np.ndarray
    x2: np.ndarray | None
    cost: float
    regret: float
    best_regret: float


class Trace:
    """Ordered record of accepted queries with the running best regret."""

    def __init__(self):
        self.entries: list[TraceEntry] = []

    def append(self, kind: str, x: np.ndarray, x2: np.ndarray | None,
               cost: float, regret: float) -> TraceEntry:
        if kind not in _KINDS:
            raise ValueError(f"unknown query kind {kind!r}")
        entry = TraceEntry(
            t=len(self.entries) + 1,
            kind=kind,
            x=np.asarray(x, dtype=float).copy(),
            x2=None if x2 is None else np.asarray(x2, dtype=float).copy(),
            cost=float(cost),
            regret=float(regret),
            best_regret=min(self.best_regret, float(regret)),
        )
        self.entries.append(entry)
        return entry

    @property
    def best_regret(self) -> float:
        if not self.entries:
            return math.inf
        return self.entries[-1].best_regret

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)
