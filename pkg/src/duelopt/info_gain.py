"""Greedy maximum-information-gain curves and confidence-width schedules.

The information gain of a point set S under observation noise eta is
0.5*logdet(I + K_S/eta^2). Exact maximization over subsets is intractable;
the curve below greedily adds the candidate with the largest marginal gain
0.5*log(1 + var_S(x)/eta^2), which carries the usual (1 - 1/e) submodular
guarantee. Once every candidate has been taken the greedy step continues
with replacement (a repeated noisy measurement still has positive gain), so
the curve extends to arbitrary n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel
from .validation import as_points


class InfoGainCurve:
    """Running greedy values gamma_1..gamma_n over a candidate grid."""

    def __init__(self, kernel: Kernel, candidates, noise: float):
        candidates = as_points(candidates)
        if len(candidates) == 0:
            raise ValueError("candidate set must be nonempty")
        if noise <= 0:
            raise ValueError("noise must be positive")
        self.kernel = kernel
        self.candidates = candidates
        self.noise = float(noise)
        self.selected: list[int] = []
        self.gains: list[float] = []
        self._cond_cov = kernel.gram(candidates)  # conditional covariance so far

    def extend_to(self, n: int):
        C = self._cond_cov
        eta2 = self.noise**2
        while len(self.gains) < n:
            var = np.diag(C)
            j = int(np.argmax(var))
            vj = float(var[j])
            self.gains.append(0.5 * np.log1p(vj / eta2))
            self.selected.append(j)
            cj = C[:, j].copy()
            C -= np.outer(cj, cj) / (vj + eta2)

    def value(self, n: int) -> float:
        """gamma_n: total information gain of the first n greedy picks."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        if n == 0:
            return 0.0
        self.extend_to(n)
        return float(np.sum(self.gains[:n]))


@dataclass
class BetaSchedule:
    """Confidence-width multiplier beta_t.

    theoretical: 2B + sqrt(2*(gamma_(t-1) + 1 + log(1/delta))), gamma from
    an InfoGainCurve extended on demand. heuristic: 0.5*log(2t + epsilon).
    """

    mode: str
    B: float = 1.0
    delta: float = 0.05
    curve: InfoGainCurve | None = None
    epsilon: float = 1.0

    def __post_init__(self):
        if self.mode not in ("theoretical", "heuristic"):
            raise ValueError(f"unknown beta mode {self.mode!r}")
        if self.mode == "theoretical" and not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")

    def value(self, t: int) -> float:
        if t < 1:
            raise ValueError("step index t must be >= 1")
        if self.mode == "heuristic":
            return 0.5 * np.log(2 * t + self.epsilon)
        if self.curve is None:
            raise ValueError("theoretical mode requires an info-gain curve")
        gamma = self.curve.value(t - 1)
        return 2 * self.B + np.sqrt(2 * (gamma + 1 + np.log(1 / self.delta)))
