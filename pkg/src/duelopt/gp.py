"""Gaussian-process posteriors with incremental Cholesky updates.

The posterior over f given observations (X, Y) with iid N(0, noise^2)
observation noise is

    mean(x) = k(x)^T (K + noise^2 I)^-1 Y
    var(x)  = k(x, x) - k(x)^T (K + noise^2 I)^-1 k(x)

maintained through a lower-triangular factor of (K + noise^2 I) that is
extended by one row per appended observation (O(n^2) per append) and
rebuilt from scratch if the rank-1 extension breaks down numerically.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .kernels import Kernel
from .validation import as_point, as_points, check_matching_lengths


class GPPosterior:
    """Immutable GP posterior state; append returns a new posterior."""

    def __init__(self, kernel: Kernel, noise: float, X: np.ndarray, y: np.ndarray,
                 L: np.ndarray, alpha: np.ndarray):
        self.kernel = kernel
        self.noise = float(noise)
        self.X = X
        self.y = y
        self._L = L
        self._alpha = alpha

    @classmethod
    def empty(cls, kernel: Kernel, noise: float) -> "GPPosterior":
        if noise <= 0:
            raise ValueError("noise must be positive")
        return cls(kernel, noise, np.empty((0, 0)), np.empty(0),
                   np.empty((0, 0)), np.empty(0))

    @classmethod
    def from_data(cls, kernel: Kernel, noise: float, X, y) -> "GPPosterior":
        if noise <= 0:
            raise ValueError("noise must be positive")
        X = as_points(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        check_matching_lengths(X, y)
        if len(X) == 0:
            return cls.empty(kernel, noise)
        L = _chol_with_jitter(kernel.gram(X) + noise**2 * np.eye(len(X)), kernel.scale)
        alpha = cho_solve((L, True), y)
        return cls(kernel, noise, X, y, L, alpha)

    @property
    def n(self) -> int:
        return len(self.y)

    def query(self, x) -> tuple[float, float]:
        """Posterior (mean, variance) at a single point."""
        mu, var = self.query_many(as_point(x)[None, :])
        return float(mu[0]), float(var[0])

    def query_many(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior (means, variances) at each row of X."""
        X = as_points(X, d=self.X.shape[1] if self.n else None)
        prior_var = self.kernel.diag(X)
        if self.n == 0:
            return np.zeros(len(X)), prior_var
        kx = self.kernel.cross(self.X, X)
        mu = kx.T @ self._alpha
        v = solve_triangular(self._L, kx, lower=True, check_finite=False)
        var = prior_var - np.einsum("ij,ij->j", v, v)
        tol = 1e-10 * max(1.0, self.kernel.scale)
        if np.any(var < -tol):
            raise RuntimeError(f"posterior variance {var.min():.3e} negative beyond tolerance")
        return mu, np.maximum(var, 0.0)

    def append(self, x, y: float) -> "GPPosterior":
        """New posterior with one more observation (rank-1 factor extension)."""
        x = as_point(x)
        if self.n == 0:
            return self.from_data(self.kernel, self.noise, x[None, :], [y])
        x = as_point(x, d=self.X.shape[1])
        n = self.n
        k = self.kernel.cross(self.X, x[None, :])[:, 0]
        c = float(self.kernel.diag(x[None, :])[0]) + self.noise**2
        w = solve_triangular(self._L, k, lower=True, check_finite=False)
        s2 = c - float(w @ w)
        X_new = np.vstack([self.X, x[None, :]])
        y_new = np.append(self.y, float(y))
        if s2 <= 1e-12 * c:
            return self.from_data(self.kernel, self.noise, X_new, y_new)
        L_new = np.zeros((n + 1, n + 1))
        L_new[:n, :n] = self._L
        L_new[n, :n] = w
        L_new[n, n] = np.sqrt(s2)
        alpha = cho_solve((L_new, True), y_new)
        return GPPosterior(self.kernel, self.noise, X_new, y_new, L_new, alpha)

    def log_marginal_likelihood(self) -> float:
        if self.n == 0:
            return 0.0
        return float(-0.5 * self.y @ self._alpha
                     - np.sum(np.log(np.diag(self._L)))
                     - 0.5 * self.n * np.log(2 * np.pi))


def _chol_with_jitter(A: np.ndarray, scale: float) -> np.ndarray:
    jitter = 0.0
    for _ in range(6):
        try:
            return cholesky(A + jitter * np.eye(len(A)), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-12 * scale)
    raise np.linalg.LinAlgError("covariance matrix not positive definite even with jitter")


def log_marginal_likelihood(kernel: Kernel, noise: float, X, y) -> float:
    """-0.5 Y^T(K+noise^2 I)^-1 Y - 0.5 log det(K+noise^2 I) - (n/2) log 2pi."""
    return GPPosterior.from_data(kernel, noise, X, y).log_marginal_likelihood()


def fit_kernel(X, y, noise: float, family: str = "se",
               lengthscale_bounds: tuple[float, float] | None = None,
               scale_bounds: tuple[float, float] | None = None,
               budget: int = 200, nu: float = 2.5) -> Kernel:
    """Maximize the log marginal likelihood over (log lengthscale, log scale).

    The search runs the dividing-rectangles optimizer over the log-bound
    box; deterministic for fixed inputs. Degenerate targets (all equal)
    still return a bounds-respecting kernel.
    """
    from .direct import Box, maximize

    X = as_points(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    check_matching_lengths(X, y)
    if lengthscale_bounds is None:
        span = float(np.max(np.ptp(X, axis=0))) if len(X) > 1 else 0.0
        span = span if span > 0 else 1.0
        lengthscale_bounds = (0.05 * span, 2.0 * span)
    if scale_bounds is None:
        v = float(np.var(y))
        v = v if v > 0 else 1.0
        scale_bounds = (1e-3 * v, 1e3 * v)

    def objective(P):
        out = np.empty(len(P))
        for i, (ll, ls) in enumerate(P):
            spec = Kernel(family, lengthscale=np.exp(ll), scale=np.exp(ls), nu=nu)
            try:
                out[i] = log_marginal_likelihood(spec, noise, X, y)
            except np.linalg.LinAlgError:
                out[i] = -1e25
        return out

    box = Box(np.log([lengthscale_bounds[0], scale_bounds[0]]),
              np.log([lengthscale_bounds[1], scale_bounds[1]]))
    res = maximize(objective, box, max_evals=budget)
    return Kernel(family, lengthscale=float(np.exp(res.x[0])),
                  scale=float(np.exp(res.x[1])), nu=nu)


class GPRegressor(BaseEstimator, RegressorMixin):
    """GP regression estimator over the posterior machinery above.

    kernel=None fits an SE kernel by marginal likelihood during fit().
    """

    def __init__(self, kernel: Kernel | None = None, noise: float = 0.1,
                 fit_budget: int = 200):
        self.kernel = kernel
        self.noise = noise
        self.fit_budget = fit_budget

    def fit(self, X, y) -> "GPRegressor":
        X = as_points(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        check_matching_lengths(X, y)
        if self.kernel is None:
            self.kernel_ = fit_kernel(X, y, noise=self.noise, budget=self.fit_budget)
        else:
            self.kernel_ = self.kernel
        self.posterior_ = GPPosterior.from_data(self.kernel_, self.noise, X, y)
        return self

    def predict(self, X, return_std: bool = False):
        if not hasattr(self, "posterior_"):
            raise NotFittedError("GPRegressor must be fitted before predict")
        mu, var = self.posterior_.query_many(X)
        if return_std:
            return mu, np.sqrt(var)
        return mu

    def append(self, x, y: float) -> "GPRegressor":
        """Add one observation without refitting hyperparameters."""
        if not hasattr(self, "posterior_"):
            raise NotFittedError("GPRegressor must be fitted before append")
        self.posterior_ = self.posterior_.append(x, y)
        return self
