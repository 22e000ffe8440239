"""Covariance kernels for GP surrogates.

Supported families:

    linear   k(x, x') = scale * <x, x'>
    se       k(x, x') = scale * exp(-||x - x'||^2 / (2 rho^2))
    matern   k(x, x') = scale * (2^(1-nu)/Gamma(nu)) (sqrt(2 nu) r/rho)^nu
                                K_nu(sqrt(2 nu) r/rho)

where r = ||x - x'|| and K_nu is the modified Bessel function of the
second kind.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

_FAMILIES = ("linear", "se", "matern")


@dataclass(frozen=True)
class Kernel:
    """Kernel family plus hyperparameters.

    lengthscale is ignored by the linear family; nu is used only by matern.
    """

    family: str
    lengthscale: float = 1.0
    scale: float = 1.0
    nu: float = 2.5

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {_FAMILIES}")
        if self.lengthscale <= 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.family == "matern" and self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")

    def __call__(self, x: np.ndarray, x2: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if x.shape != x2.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {x2.shape}")
        return float(self.cross(x[None, :], x2[None, :])[0, 0])

    def cross(self, X: np.ndarray, X2: np.ndarray) -> np.ndarray:
        """Cross-covariance matrix of shape (len(X), len(X2))."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        X2 = np.atleast_2d(np.asarray(X2, dtype=float))
        if X.shape[1] != X2.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {X2.shape[1]}")
        if self.family == "linear":
            return self.scale * (X @ X2.T)
        r = cdist(X, X2)
        if self.family == "se":
            return self.scale * np.exp(-(r**2) / (2 * self.lengthscale**2))
        return self._matern(r)

    def _matern(self, r: np.ndarray) -> np.ndarray:
        nu = self.nu
        z = np.sqrt(2 * nu) * r / self.lengthscale
        # kv overflows as z -> 0; the limit of the whole expression there is 1.
        small = z < 1e-10
        zs = np.where(small, 1.0, z)
        vals = (2 ** (1 - nu) / gamma_fn(nu)) * zs**nu * kv(nu, zs)
        return self.scale * np.where(small, 1.0, vals)

    def gram(self, X: np.ndarray) -> np.ndarray:
        """Covariance matrix of a point set with itself."""
        return self.cross(X, X)

    def diag(self, X: np.ndarray) -> np.ndarray:
        """k(x, x) for each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.family == "linear":
            return self.scale * np.sum(X * X, axis=1)
        return np.full(X.shape[0], self.scale)
