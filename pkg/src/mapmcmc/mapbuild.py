"""Training of triangular transport maps against an unnormalized target density.

The objective is the sample Kullback-Leibler divergence between the
reference density and the pullback of the target through the map,

    J(beta) = (1/n) sum_i [ -log pi(T(r_i)) - log det dT(r_i) ],

minimized over map coefficients with reference samples r_i held fixed.
Deep maps are trained stage by stage: each new stage starts from the
identity and is composed onto the frozen, already-trained stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .problems import ExtrapolationError
from .transport import (
    DEFAULT_QUADRATURE_ORDER,
    DeepMap,
    TriangularMap,
    compose,
    identity_map,
)

__all__ = [
    "ReferenceDensity",
    "BuildConfig",
    "BuildError",
    "kl_objective",
    "objective_gradient",
    "build_map",
    "pushforward_samples",
]


class BuildError(RuntimeError):
    """Raised when map training cannot proceed (bad config, infeasible start)."""


@dataclass
class ReferenceDensity:
    """Diagonal Gaussian reference distribution on R^d."""

    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.stddev = np.atleast_1d(np.asarray(self.stddev, dtype=float))
        if self.stddev.shape != self.mean.shape:
            raise ValueError("reference mean and stddev must have matching shapes")
        if np.any(self.stddev <= 0):
            raise ValueError("reference standard deviations must be positive")

    @classmethod
    def standard(cls, d: int) -> "ReferenceDensity":
        return cls(mean=np.zeros(d), stddev=np.ones(d))

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def log_density(self, r: np.ndarray) -> np.ndarray | float:
        r = np.asarray(r, dtype=float)
        z = (r - self.mean) / self.stddev
        terms = -0.5 * z**2 - np.log(self.stddev) - 0.5 * np.log(2.0 * np.pi)
        out = terms.sum(axis=-1)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mean + self.stddev * rng.standard_normal((n, self.d))


@dataclass
class BuildConfig:
    """Configuration of a stage-wise map build.

    Attributes:
        n_samples: reference sample count per stage.
        stages: list of (ell_L, ell_R) degree pairs, one per stage.
        tolerance: stop when the coefficient step inf-norm falls below this.
        max_iterations: per-stage quasi-Newton iteration cap.
        seed: RNG seed; stage s redraws samples from stream (seed, s).
        fd_step: base finite-difference step for the gradient.
        q: quadrature order of the built stages.
        sample_box: optional (lo, hi) per-coordinate bounds; reference draws
            are rejection-sampled into the box.  Use when the target's
            support is bounded (e.g. tabulated likelihoods) so the identity
            start stays feasible.
    """

    n_samples: int
    stages: list[tuple[int, int]]
    tolerance: float = 1e-6
    max_iterations: int = 500
    seed: int = 0
    fd_step: float = 1e-6
    q: int = DEFAULT_QUADRATURE_ORDER
    sample_box: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.n_samples <= 0:
            raise BuildError(f"n_samples must be positive, got {self.n_samples}")
        if not self.stages:
            raise BuildError("at least one stage is required")
        for pair in self.stages:
            if len(pair) != 2 or pair[0] < 0 or pair[1] < 0:
                raise BuildError(f"invalid stage degree pair {pair!r}")
        if self.tolerance <= 0 or self.fd_step <= 0:
            raise BuildError("tolerance and fd_step must be positive")


def _target_values(log_target, thetas: np.ndarray) -> np.ndarray:
    """Evaluate log_target on rows of ``thetas``.

    Targets carrying ``supports_batch = True`` are called once with the full
    matrix; anything else is evaluated row by row.  ExtrapolationError maps
    to -inf (the sample lies outside the target's tabulated support).
    """
    if getattr(log_target, "supports_batch", False):
        return np.asarray(log_target(thetas), dtype=float)
    out = np.empty(thetas.shape[0])
    for k in range(thetas.shape[0]):
        try:
            out[k] = log_target(thetas[k])
        except ExtrapolationError:
            out[k] = -np.inf
    return out


def kl_objective(map_obj, log_target, ref_samples: np.ndarray) -> float:
    """Sample KL objective of ``map_obj`` against ``log_target``.

    Returns +inf if any sample term is +inf (target log-density -inf or
    degenerate Jacobian at that sample).
    """
    samples = np.atleast_2d(np.asarray(ref_samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("kl_objective requires at least one reference sample")
    thetas = map_obj.eval(samples)
    log_dets = np.atleast_1d(map_obj.log_det_jacobian(samples))
    terms = -_target_values(log_target, thetas) - log_dets
    return float(np.mean(terms))


def _stage_coeffs(map_obj) -> tuple[TriangularMap, np.ndarray]:
    """The trainable stage of ``map_obj`` and its packed coefficient vector.

    For a DeepMap the trainable stage is the last one (earlier stages are
    frozen); for a TriangularMap it is the map itself.  Packing order is
    per component, coeffs_L then coeffs_R.
    """
    stage = map_obj.stages[-1] if isinstance(map_obj, DeepMap) else map_obj
    parts = []
    for comp in stage.components:
        parts.append(comp.coeffs_L)
        parts.append(comp.coeffs_R)
    return stage, np.concatenate(parts)


def _set_stage_coeffs(stage: TriangularMap, beta: np.ndarray) -> None:
    pos = 0
    for comp in stage.components:
        nL = comp.coeffs_L.size
        comp.coeffs_L = beta[pos : pos + nL].copy()
        pos += nL
        nR = comp.coeffs_R.size
        comp.coeffs_R = beta[pos : pos + nR].copy()
        pos += nR
    if pos != beta.size:
        raise ValueError(f"coefficient vector has length {beta.size}, stage needs {pos}")


def _fd_gradient(f, beta: np.ndarray, fd_step: float) -> np.ndarray:
    """Central finite-difference gradient with per-coefficient relative steps."""
    grad = np.empty_like(beta)
    for j in range(beta.size):
        h = fd_step * (1.0 + abs(beta[j]))
        plus = beta.copy()
        plus[j] += h
        minus = beta.copy()
        minus[j] -= h
        f_plus = f(plus)
        f_minus = f(minus)
        if np.isinf(f_plus) and np.isinf(f_minus):
            grad[j] = np.nan
        else:
            grad[j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def objective_gradient(map_obj, log_target, ref_samples: np.ndarray, fd_step: float = 1e-6) -> np.ndarray:
    """Gradient of the KL objective in the trainable stage's coefficients.

    Entries are central differences with step fd_step * (1 + |beta_j|);
    a coefficient whose objective is +inf on both sides reports NaN.
    """
    stage, beta0 = _stage_coeffs(map_obj)

    def f(beta: np.ndarray) -> float:
        _set_stage_coeffs(stage, beta)
        return kl_objective(map_obj, log_target, ref_samples)

    try:
        return _fd_gradient(f, beta0, fd_step)
    finally:
        _set_stage_coeffs(stage, beta0)


_ARMIJO_C = 1e-4
_MAX_HALVINGS = 60


def _minimize(f, beta0: np.ndarray, tolerance: float, max_iterations: int, fd_step: float) -> dict:
    """Quasi-Newton (BFGS) descent with Armijo backtracking.

    Stops when the accepted coefficient step's inf-norm drops below
    ``tolerance``, when no Armijo decrease can be found, or at the
    iteration cap.  Accepted iterates have non-increasing objective.
    """
    beta = beta0.copy()
    fval = f(beta)
    if not np.isfinite(fval):
        raise BuildError("objective is not finite at the identity start")
    f_init = fval
    grad = _fd_gradient(f, beta, fd_step)
    if not np.all(np.isfinite(grad)):
        raise BuildError("objective gradient is not finite at the identity start")
    H = np.eye(beta.size)
    iterations = 0
    converged = False
    for _ in range(max_iterations):
        direction = -H @ grad
        slope = float(grad @ direction)
        if not np.isfinite(slope) or slope >= 0.0:
            H = np.eye(beta.size)
            direction = -grad
            slope = float(grad @ direction)
        if slope == 0.0:
            converged = True
            break
        alpha = 1.0
        accepted = None
        for _ in range(_MAX_HALVINGS):
            candidate = beta + alpha * direction
            f_cand = f(candidate)
            if f_cand <= fval + _ARMIJO_C * alpha * slope:
                accepted = (candidate, f_cand)
                break
            alpha *= 0.5
        if accepted is None:
            break
        step = alpha * direction
        beta_new, f_new = accepted
        grad_new = _fd_gradient(f, beta_new, fd_step)
        if not np.all(np.isfinite(grad_new)):
            # Leave the last accepted iterate in place; the surrounding
            # objective is still finite even if a one-sided probe is not.
            beta, fval = beta_new, f_new
            iterations += 1
            break
        y = grad_new - grad
        sy = float(step @ y)
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
            rho = 1.0 / sy
            I = np.eye(beta.size)
            V = I - rho * np.outer(step, y)
            H = V @ H @ V.T + rho * np.outer(step, step)
        beta, fval, grad = beta_new, f_new, grad_new
        iterations += 1
        if np.max(np.abs(step)) < tolerance:
            converged = True
            break
    f(beta)  # leave the stage holding the final coefficients
    return {
        "beta": beta,
        "iterations": iterations,
        "objective_initial": f_init,
        "objective_final": fval,
        "grad_norm_final": float(np.linalg.norm(grad)) if np.all(np.isfinite(grad)) else float("nan"),
        "converged": converged,
    }


def _sample_in_box(reference: ReferenceDensity, rng: np.random.Generator, n: int, box) -> np.ndarray:
    if box is None:
        return reference.sample(rng, n)
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    samples = reference.sample(rng, n)
    for _ in range(1000):
        outside = np.any((samples < lo) | (samples > hi), axis=1)
        n_out = int(outside.sum())
        if n_out == 0:
            return samples
        samples[outside] = reference.sample(rng, n_out)
    raise BuildError("rejection sampling into sample_box did not terminate")


def build_map(log_target, reference: ReferenceDensity, config: BuildConfig) -> tuple[DeepMap, dict]:
    """Train a deep triangular map pushing ``reference`` toward ``log_target``.

    Each stage draws fresh reference samples from the seeded stream
    (config.seed, stage_index), starts at the identity, and is minimized
    with the earlier stages frozen.

    Returns:
        (trained map, build report).  The report records per-stage sample
        counts, iterations, initial/final objectives, and gradient norms.
    """
    d = reference.d
    built: list[TriangularMap] = []
    report: dict = {"seed": config.seed, "n_samples": config.n_samples, "stages": []}
    for s, (ell_L, ell_R) in enumerate(config.stages):
        rng = np.random.default_rng([config.seed, s])
        samples = _sample_in_box(reference, rng, config.n_samples, config.sample_box)
        stage = identity_map(d, ell_L, ell_R, q=config.q)

        # The frozen prefix is constant during this stage: push the samples
        # through it once and fold its log-det into the per-sample terms.
        if built:
            prefix = compose(built)
            stage_inputs = prefix.eval(samples)
            base_log_det = np.atleast_1d(prefix.log_det_jacobian(samples))
        else:
            stage_inputs = samples
            base_log_det = np.zeros(samples.shape[0])

        def stage_objective(beta: np.ndarray) -> float:
            _set_stage_coeffs(stage, beta)
            thetas = stage.eval(stage_inputs)
            log_dets = np.atleast_1d(stage.log_det_jacobian(stage_inputs))
            terms = -_target_values(log_target, thetas) - log_dets - base_log_det
            return float(np.mean(terms))

        _, beta0 = _stage_coeffs(stage)
        try:
            result = _minimize(
                stage_objective, beta0, config.tolerance, config.max_iterations, config.fd_step
            )
        except BuildError as err:
            raise BuildError(f"stage {s + 1}: {err}") from None
        report["stages"].append(
            {
                "stage": s + 1,
                "ell_L": ell_L,
                "ell_R": ell_R,
                "iterations": result["iterations"],
                "objective_initial": result["objective_initial"],
                "objective_final": result["objective_final"],
                "grad_norm_final": result["grad_norm_final"],
                "converged": result["converged"],
            }
        )
        built.append(stage)
    return compose(built), report


def pushforward_samples(map_obj, reference: ReferenceDensity, n: int, seed: int) -> np.ndarray:
    """Map ``n`` fresh reference samples through ``map_obj``."""
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    rng = np.random.default_rng(seed)
    return map_obj.eval(reference.sample(rng, n))
