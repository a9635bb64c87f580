"""Chain quality diagnostics: autocorrelation time and effective sample size."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateSeriesError",
    "EssEntry",
    "EssReport",
    "iact",
    "ess",
    "summarize",
]

_MIN_LENGTH = 10


class DegenerateSeriesError(ValueError):
    """Raised when a series is too short or has zero variance."""


def _autocorrelation(x: np.ndarray) -> np.ndarray:
    """Biased-normalization autocorrelation of a 1-D series via FFT."""
    n = x.size
    centered = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / n
    if acov[0] <= 0.0:
        raise DegenerateSeriesError("series has zero variance")
    return acov / acov[0]


def iact(series: np.ndarray) -> float:
    """Integrated autocorrelation time tau = 1 + 2 sum_k rho(k).

    The sum is truncated by Geyer's initial monotone positive sequence rule
    on the paired sums Gamma_m = rho(2m) + rho(2m+1): keep pairs while they
    stay positive, enforce monotone non-increase, and clamp the result below
    at 1.

    Args:
        series: 1-D array of at least 10 values with nonzero variance.
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size < _MIN_LENGTH:
        raise DegenerateSeriesError(
            f"series of length {x.size} is too short (need >= {_MIN_LENGTH})"
        )
    rho = _autocorrelation(x)
    n_pairs = rho.size // 2
    paired = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    positive = np.nonzero(paired <= 0.0)[0]
    cutoff = positive[0] if positive.size else n_pairs
    if cutoff == 0:
        return 1.0
    gamma = np.minimum.accumulate(paired[:cutoff])
    return max(1.0, 2.0 * float(gamma.sum()) - 1.0)


@dataclass
class EssEntry:
    """ESS record for one monitored scalar function of the chain state."""

    n: int
    tau: float
    ess: float


def _chain_samples(chain) -> np.ndarray:
    samples = getattr(chain, "samples", chain)
    return np.atleast_2d(np.asarray(samples, dtype=float))


def ess(chain, f=None) -> EssEntry:
    """Effective sample size n / tau of f(theta_t) along the chain.

    Args:
        chain: a Chain or an (n, d) sample array.
        f: scalar function of the state; defaults to the first coordinate
            for 1-D chains and is required otherwise.
    """
    samples = _chain_samples(chain)
    if f is not None:
        series = np.array([f(row) for row in samples])
    elif samples.shape[1] == 1:
        series = samples[:, 0]
    else:
        raise ValueError("a monitored function f is required for multivariate chains")
    tau = iact(series)
    return EssEntry(n=series.size, tau=tau, ess=series.size / tau)


@dataclass
class EssReport:
    """Per-coordinate chain summary.

    ``tau`` and ``ess`` hold NaN for degenerate coordinates; ``headline_ess``
    is the minimum coordinate ESS, or None when any coordinate is degenerate.
    """

    n: int
    d: int
    acceptance_rate: float
    means: np.ndarray
    variances: np.ndarray
    tau: np.ndarray
    ess: np.ndarray
    headline_ess: float | None
    n_target_evals: int | None = None

    def to_json_dict(self) -> dict:
        def clean(values):
            return [None if not math.isfinite(v) else float(v) for v in values]

        return {
            "n": self.n,
            "d": self.d,
            "acceptance_rate": self.acceptance_rate,
            "means": [float(v) for v in self.means],
            "variances": [float(v) for v in self.variances],
            "tau": clean(self.tau),
            "ess": clean(self.ess),
            "headline_ess": self.headline_ess,
            "n_target_evals": self.n_target_evals,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")


def summarize(chain) -> EssReport:
    """Summarize a chain: moments, acceptance rate, per-coordinate tau and ESS.

    The monitored functions are the coordinate projections.  The headline
    ESS is their minimum; a degenerate coordinate (e.g. a fully repeated
    chain) marks the headline unavailable.
    """
    samples = _chain_samples(chain)
    n, d = samples.shape
    accepted = getattr(chain, "accepted", None)
    acceptance = float(np.mean(accepted)) if accepted is not None else float("nan")
    tau = np.empty(d)
    ess_values = np.empty(d)
    for k in range(d):
        try:
            tau[k] = iact(samples[:, k])
            ess_values[k] = n / tau[k]
        except DegenerateSeriesError:
            tau[k] = np.nan
            ess_values[k] = np.nan
    headline = None if np.any(np.isnan(ess_values)) else float(ess_values.min())
    return EssReport(
        n=n,
        d=d,
        acceptance_rate=acceptance,
        means=samples.mean(axis=0),
        variances=samples.var(axis=0, ddof=1) if n > 1 else np.zeros(d),
        tau=tau,
        ess=ess_values,
        headline_ess=headline,
        n_target_evals=getattr(chain, "n_target_evals", None),
    )
