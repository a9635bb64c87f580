"""Bayesian inverse problem assembly: forward models, priors, noise, posteriors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

__all__ = [
    "ExtrapolationError",
    "ForwardModel",
    "LinearForwardModel",
    "GaussianPrior",
    "LogNormalPrior",
    "NoiseModel",
    "BayesianProblem",
    "synthesize_data",
    "linear_gaussian_posterior",
]

_LOG_2PI = np.log(2.0 * np.pi)


class ExtrapolationError(RuntimeError):
    """Raised by tabulated forward models queried outside their domain.

    Samplers and map building treat this as a log-likelihood of -inf
    (certain rejection); every other model failure propagates.
    """


class ForwardModel:
    """Base class for parameter-to-observable maps.

    Attributes:
        d_in: parameter dimension.
        d_out: observable dimension.
        cost: "hifi" or "lofi", a bookkeeping tag for experiment records.
        parallel_safe: whether concurrent eval calls are safe (all models
            here are pure functions of theta, so True).
    """

    d_in: int
    d_out: int
    cost: str = "hifi"
    parallel_safe: bool = True

    def eval(self, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class LinearForwardModel(ForwardModel):
    """G(theta) = A theta."""

    def __init__(self, matrix: np.ndarray, cost: str = "hifi"):
        self.matrix = np.asarray(matrix, dtype=float)
        self.d_out, self.d_in = self.matrix.shape
        self.cost = cost

    def eval(self, theta: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(theta, dtype=float)


@dataclass
class GaussianPrior:
    """Independent Gaussian prior with diagonal covariance."""

    mean: np.ndarray
    cov_diag: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov_diag = np.atleast_1d(np.asarray(self.cov_diag, dtype=float))
        if self.cov_diag.shape != self.mean.shape:
            raise ValueError("prior mean and cov_diag must have matching shapes")
        if np.any(self.cov_diag <= 0):
            raise ValueError("prior variances must be positive")

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def log_density(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        z = (theta - self.mean) ** 2 / self.cov_diag
        return float(-0.5 * np.sum(z) - 0.5 * np.sum(_LOG_2PI + np.log(self.cov_diag)))


@dataclass
class LogNormalPrior:
    """Independent log-normal prior: log theta_k ~ N(mu_log_k, var_log_k).

    The default construction (`median_one`) puts the median of every
    coordinate at 1.  `moment_matched` instead matches a target mean and
    variance of theta itself.
    """

    mu_log: np.ndarray
    var_log: np.ndarray

    def __post_init__(self) -> None:
        self.mu_log = np.atleast_1d(np.asarray(self.mu_log, dtype=float))
        self.var_log = np.atleast_1d(np.asarray(self.var_log, dtype=float))
        if np.any(self.var_log <= 0):
            raise ValueError("log-variances must be positive")

    @classmethod
    def median_one(cls, d: int, var_log: float = 0.05) -> "LogNormalPrior":
        return cls(mu_log=np.zeros(d), var_log=np.full(d, var_log))

    @classmethod
    def moment_matched(cls, d: int, mean: float = 1.0, var: float = 0.05) -> "LogNormalPrior":
        sigma2 = np.log(1.0 + var / mean**2)
        mu = np.log(mean) - 0.5 * sigma2
        return cls(mu_log=np.full(d, mu), var_log=np.full(d, sigma2))

    @property
    def d(self) -> int:
        return self.mu_log.shape[0]

    def log_density(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0.0):
            return -np.inf
        log_t = np.log(theta)
        z = (log_t - self.mu_log) ** 2 / self.var_log
        return float(
            -np.sum(log_t) - 0.5 * np.sum(z) - 0.5 * np.sum(_LOG_2PI + np.log(self.var_log))
        )


@dataclass
class NoiseModel:
    """Additive Gaussian observation noise with covariance ``cov``.

    ``cov`` may be a vector (diagonal covariance, fast path) or a dense SPD
    matrix (whitening through its Cholesky factor).
    """

    cov: np.ndarray
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.cov = np.asarray(self.cov, dtype=float)
        if self.cov.ndim == 1:
            if np.any(self.cov <= 0):
                raise ValueError("noise variances must be positive")
            self._chol = None
        elif self.cov.ndim == 2:
            self._chol = np.linalg.cholesky(self.cov)
        else:
            raise ValueError("noise covariance must be a vector or a matrix")

    @classmethod
    def iid(cls, variance: float, m: int) -> "NoiseModel":
        return cls(cov=np.full(m, float(variance)))

    def whiten(self, residual: np.ndarray) -> np.ndarray:
        """Apply cov^{-1/2} to a residual vector."""
        residual = np.asarray(residual, dtype=float)
        if self.cov.ndim == 1:
            return residual / np.sqrt(self.cov)
        return solve_triangular(self._chol, residual, lower=True)

    def sqrt_apply(self, z: np.ndarray) -> np.ndarray:
        """Apply cov^{1/2} to a standard normal draw (for data synthesis)."""
        if self.cov.ndim == 1:
            return np.sqrt(self.cov) * z
        return self._chol @ z


@dataclass
class BayesianProblem:
    """Posterior built from a forward model, a prior, noise, and data.

    log_posterior(theta) = -misfit(theta) + log prior(theta), where
    misfit(theta) = 0.5 * || cov^{-1/2} (G(theta) - y) ||^2.

    The prior is evaluated first: outside its support the forward model is
    never consulted and -inf is returned directly.
    """

    model: ForwardModel
    prior: GaussianPrior | LogNormalPrior
    noise: NoiseModel
    data: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != (self.model.d_out,):
            raise ValueError(
                f"data has shape {self.data.shape}, model produces ({self.model.d_out},)"
            )

    @property
    def d(self) -> int:
        return self.model.d_in

    def misfit(self, theta: np.ndarray) -> float:
        w = self.noise.whiten(self.model.eval(theta) - self.data)
        return float(0.5 * np.dot(w, w))

    def log_posterior(self, theta: np.ndarray) -> float:
        lp = self.prior.log_density(theta)
        if lp == -np.inf:
            return -np.inf
        return -self.misfit(theta) + lp


def synthesize_data(
    model: ForwardModel, theta_star: np.ndarray, noise: NoiseModel, seed: int
) -> np.ndarray:
    """Draw y = G(theta_star) + cov^{1/2} z with z standard normal."""
    rng = np.random.default_rng(seed)
    clean = model.eval(np.asarray(theta_star, dtype=float))
    return clean + noise.sqrt_apply(rng.standard_normal(model.d_out))


def linear_gaussian_posterior(
    matrix: np.ndarray,
    prior: GaussianPrior,
    noise: NoiseModel,
    data: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form posterior moments for G(theta) = A theta with Gaussian prior.

    Returns:
        (posterior mean, posterior covariance).
    """
    A = np.asarray(matrix, dtype=float)
    y = np.asarray(data, dtype=float)
    if noise.cov.ndim == 1:
        noise_inv = np.diag(1.0 / noise.cov)
    else:
        noise_inv = np.linalg.inv(noise.cov)
    prior_inv = np.diag(1.0 / prior.cov_diag)
    precision = A.T @ noise_inv @ A + prior_inv
    factor = cho_factor(precision)
    mean = cho_solve(factor, A.T @ noise_inv @ y + prior_inv @ prior.mean)
    cov = cho_solve(factor, np.eye(precision.shape[0]))
    return mean, cov
