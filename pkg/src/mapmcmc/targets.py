"""Analytic target densities for tests, calibration runs, and experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .polybasis import total_degree_set
from .transport import DEFAULT_QUADRATURE_ORDER, MapComponent, TriangularMap

__all__ = ["BananaDensity", "GaussianDensity", "exact_banana_map"]


@dataclass
class BananaDensity:
    """Unnormalized banana-shaped density on R^2.

    log p(theta) = -theta_1^2 / (2 spread^2) - (theta_2 - curvature * theta_1^2)^2 / 2

    The defaults give the standard banana; perturb ``curvature`` or
    ``spread`` to mimic a cheap approximation of it.
    """

    curvature: float = 1.0
    spread: float = 1.0
    supports_batch: bool = field(default=True, repr=False)

    def __call__(self, theta: np.ndarray) -> np.ndarray | float:
        theta = np.asarray(theta, dtype=float)
        t1 = theta[..., 0]
        t2 = theta[..., 1]
        out = -0.5 * (t1 / self.spread) ** 2 - 0.5 * (t2 - self.curvature * t1**2) ** 2
        return float(out) if out.ndim == 0 else out


class GaussianDensity:
    """Normalized multivariate Gaussian log-density with fixed moments."""

    supports_batch = True

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        self.d = self.mean.shape[0]
        self._chol = np.linalg.cholesky(self.cov)
        self._log_norm = -0.5 * self.d * np.log(2.0 * np.pi) - np.sum(
            np.log(np.diag(self._chol))
        )

    def __call__(self, theta: np.ndarray) -> np.ndarray | float:
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        diff = np.atleast_2d(theta) - self.mean
        z = solve_triangular(self._chol, diff.T, lower=True)
        out = self._log_norm - 0.5 * np.sum(z * z, axis=0)
        return float(out[0]) if single else out


def exact_banana_map(q: int = DEFAULT_QUADRATURE_ORDER) -> TriangularMap:
    """The exact transport from N(0, I) to the standard banana.

    T(r) = (r_1, r_1^2 + r_2): pushing standard normals through it yields
    exactly the density BananaDensity() up to normalization.
    """
    set_L1 = total_degree_set(2, 0, 0)
    set_R1 = total_degree_set(2, 1, 0)
    comp1 = MapComponent(
        i=1,
        set_L=set_L1,
        set_R=set_R1,
        coeffs_L=np.zeros(1),
        coeffs_R=np.ones(1),
        q=q,
    )
    set_L2 = total_degree_set(2, 1, 2)
    coeffs_L2 = np.zeros(len(set_L2))
    for row, j in enumerate(set_L2.indices):
        if j[0] == 2:
            coeffs_L2[row] = 1.0
    set_R2 = total_degree_set(2, 2, 0)
    comp2 = MapComponent(
        i=2,
        set_L=set_L2,
        set_R=set_R2,
        coeffs_L=coeffs_L2,
        coeffs_R=np.ones(1),
        q=q,
    )
    return TriangularMap(d=2, components=[comp1, comp2])
