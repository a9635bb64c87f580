"""Metropolis-Hastings samplers, with and without transport-map preconditioning.

All acceptance arithmetic is in log space; each sampler performs exactly one
fresh target log-posterior evaluation per iteration (the current state's
value is cached), plus one for the start.  The delayed-rejection sampler may
add one more evaluation on first-stage rejections.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mapbuild import ReferenceDensity
from .problems import ExtrapolationError

__all__ = [
    "Chain",
    "ChainAbortedError",
    "IndependenceProposal",
    "RandomWalkProposal",
    "metropolis_hastings",
    "mfmh",
    "adaptive_metropolis_dram",
    "thin_and_burn",
    "save_chain",
    "load_chain",
]

_LOG_2PI = math.log(2.0 * math.pi)
_DR_SHRINK = 25.0  # second-stage proposal covariance divisor


class ChainAbortedError(RuntimeError):
    """A sampler failed mid-run; ``chain`` holds the completed iterations."""

    def __init__(self, message: str, chain: "Chain"):
        super().__init__(message)
        self.chain = chain


@dataclass
class Chain:
    """MCMC output: one row per iteration, the start point excluded.

    ``accepted[i]`` False implies ``samples[i]`` equals ``samples[i-1]``
    exactly.  ``n_target_evals`` counts fresh target log-posterior
    evaluations including the start.
    """

    samples: np.ndarray
    log_posts: np.ndarray
    accepted: np.ndarray
    n_target_evals: int
    seed: int | None = None
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


@dataclass
class IndependenceProposal:
    """Proposals drawn from a fixed reference density, ignoring the state."""

    reference: ReferenceDensity

    def draw(self, rng: np.random.Generator, current: np.ndarray) -> np.ndarray:
        return self.reference.sample(rng, 1)[0]

    def log_q(self, x: np.ndarray, given: np.ndarray) -> float:
        return float(self.reference.log_density(x))


@dataclass
class RandomWalkProposal:
    """Gaussian random walk with diagonal covariance."""

    step_std: np.ndarray

    def __post_init__(self) -> None:
        self.step_std = np.atleast_1d(np.asarray(self.step_std, dtype=float))
        if np.any(self.step_std <= 0):
            raise ValueError("random-walk step standard deviations must be positive")

    @classmethod
    def from_variance(cls, variance: float, d: int) -> "RandomWalkProposal":
        return cls(step_std=np.full(d, math.sqrt(variance)))

    def draw(self, rng: np.random.Generator, current: np.ndarray) -> np.ndarray:
        return current + self.step_std * rng.standard_normal(current.shape[0])

    def log_q(self, x: np.ndarray, given: np.ndarray) -> float:
        z = (x - given) / self.step_std
        return float(np.sum(-0.5 * z**2 - np.log(self.step_std) - 0.5 * _LOG_2PI))


def _log_uniform(rng: np.random.Generator) -> float:
    u = rng.random()
    return math.log(u) if u > 0.0 else -math.inf


def _log1mexp(x: float) -> float:
    """log(1 - exp(x)) for x < 0, stable near both ends."""
    if x < -math.log(2.0):
        return math.log1p(-math.exp(x))
    return math.log(-math.expm1(x))


def _partial(samples, log_posts, accepted, done, evals, seed) -> Chain:
    return Chain(
        samples=samples[:done].copy(),
        log_posts=log_posts[:done].copy(),
        accepted=accepted[:done].copy(),
        n_target_evals=evals,
        seed=seed,
        info={"truncated": True},
    )


def metropolis_hastings(log_post, kernel, start, n_steps: int, seed: int) -> Chain:
    """Plain Metropolis-Hastings with the given proposal kernel.

    Args:
        log_post: unnormalized target log-density; may raise
            ExtrapolationError to signal certain rejection.
        kernel: proposal with ``draw(rng, current)`` and ``log_q(x, given)``.
        start: initial state (not included in the output).
        n_steps: chain length M.
        seed: RNG seed.
    """
    current = np.array(start, dtype=float)
    d = current.shape[0]
    if n_steps < 1:
        raise ValueError(f"n_steps must be positive, got {n_steps}")
    rng = np.random.default_rng(seed)
    evals = 0

    def target(theta: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        return float(log_post(theta))

    try:
        lp_current = target(current)
    except ExtrapolationError:
        lp_current = -math.inf
    if not math.isfinite(lp_current):
        raise ValueError("start point has non-finite log-posterior")

    samples = np.empty((n_steps, d))
    log_posts = np.empty(n_steps)
    accepted = np.empty(n_steps, dtype=bool)
    for step in range(n_steps):
        candidate = kernel.draw(rng, current)
        try:
            lp_candidate = target(candidate)
        except ExtrapolationError:
            lp_candidate = -math.inf
        except Exception as err:
            raise ChainAbortedError(
                f"target evaluation failed at iteration {step + 1}: {err}",
                _partial(samples, log_posts, accepted, step, evals, seed),
            ) from err
        numerator = kernel.log_q(current, candidate) + lp_candidate
        denominator = kernel.log_q(candidate, current) + lp_current
        log_ratio = numerator - denominator
        if _log_uniform(rng) < log_ratio:
            current = candidate
            lp_current = lp_candidate
            accepted[step] = True
        else:
            accepted[step] = False
        samples[step] = current
        log_posts[step] = lp_current
    return Chain(samples, log_posts, accepted, evals, seed)


def mfmh(log_post, map_obj, kernel, start, n_steps: int, seed: int) -> Chain:
    """Map-preconditioned Metropolis-Hastings.

    Proposals are made in reference space, pushed through ``map_obj``, and
    accepted against the target pulled back through the map: the acceptance
    log-ratio gains the Jacobian log-determinants at the proposed and
    current reference points.  The reference-space state is tracked between
    iterations (set to the proposed point on acceptance), so only the start
    requires a map inversion.

    With the identity map this reduces exactly to ``metropolis_hastings``:
    the RNG stream and every acceptance comparison coincide bit for bit.
    """
    current = np.array(start, dtype=float)
    if n_steps < 1:
        raise ValueError(f"n_steps must be positive, got {n_steps}")
    d = current.shape[0]
    rng = np.random.default_rng(seed)
    evals = 0

    def target(theta: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        return float(log_post(theta))

    r_current = map_obj.invert(current)
    ld_current = float(map_obj.log_det_jacobian(r_current))
    if not math.isfinite(ld_current):
        raise ValueError("start point has degenerate map Jacobian")
    try:
        lp_current = target(current)
    except ExtrapolationError:
        lp_current = -math.inf
    if not math.isfinite(lp_current):
        raise ValueError("start point has non-finite log-posterior")

    samples = np.empty((n_steps, d))
    log_posts = np.empty(n_steps)
    accepted = np.empty(n_steps, dtype=bool)
    for step in range(n_steps):
        r_candidate = kernel.draw(rng, r_current)
        theta_candidate = map_obj.eval(r_candidate)
        ld_candidate = float(map_obj.log_det_jacobian(r_candidate))
        try:
            lp_candidate = target(theta_candidate)
        except ExtrapolationError:
            lp_candidate = -math.inf
        except Exception as err:
            raise ChainAbortedError(
                f"target evaluation failed at iteration {step + 1}: {err}",
                _partial(samples, log_posts, accepted, step, evals, seed),
            ) from err
        numerator = kernel.log_q(r_current, r_candidate) + lp_candidate + ld_candidate
        denominator = kernel.log_q(r_candidate, r_current) + lp_current + ld_current
        log_ratio = numerator - denominator
        if _log_uniform(rng) < log_ratio:
            current = theta_candidate
            lp_current = lp_candidate
            r_current = r_candidate
            ld_current = ld_candidate
            accepted[step] = True
        else:
            accepted[step] = False
        samples[step] = current
        log_posts[step] = lp_current
    return Chain(samples, log_posts, accepted, evals, seed)


def adaptive_metropolis_dram(
    log_post,
    start,
    init_cov_diag,
    n_steps: int,
    burn_adapt: int,
    seed: int,
    enable_dr: bool = True,
    max_target_evals: int | None = None,
) -> Chain:
    """Adaptive-Metropolis random walk with one delayed-rejection stage.

    The proposal covariance is the fixed diagonal ``init_cov_diag`` through
    iteration ``burn_adapt`` and s_d * (sample covariance of the chain
    history + 1e-10 I) afterwards, with s_d = 2.38^2 / d and the history
    moments maintained by a rank-one recursion every iteration.  On a
    first-stage rejection (if ``enable_dr``) a second candidate is drawn
    with the covariance shrunk by 25 and accepted with the standard
    two-stage delayed-rejection ratio.

    With ``burn_adapt = n_steps`` and ``enable_dr = False`` the chain is
    bit-identical to ``metropolis_hastings`` with a RandomWalkProposal of
    the same covariance and seed.

    Args:
        max_target_evals: optional evaluation budget; the chain stops early
            (marked in ``info``) once the counter reaches it, for
            matched-cost comparisons against other samplers.
    """
    current = np.array(start, dtype=float)
    d = current.shape[0]
    if n_steps < 1:
        raise ValueError(f"n_steps must be positive, got {n_steps}")
    init_cov_diag = np.atleast_1d(np.asarray(init_cov_diag, dtype=float))
    if init_cov_diag.shape != (d,) or np.any(init_cov_diag <= 0):
        raise ValueError("init_cov_diag must be a positive vector matching the state")
    s_d = 2.38**2 / d
    base_kernel = RandomWalkProposal(step_std=np.sqrt(init_cov_diag))
    rng = np.random.default_rng(seed)
    evals = 0

    def target(theta: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        return float(log_post(theta))

    try:
        lp_current = target(current)
    except ExtrapolationError:
        lp_current = -math.inf
    if not math.isfinite(lp_current):
        raise ValueError("start point has non-finite log-posterior")

    # History moments over theta_0, theta_1, ... (rank-one updates).
    hist_mean = current.copy()
    hist_m2 = np.zeros((d, d))
    hist_count = 1

    samples = np.empty((n_steps, d))
    log_posts = np.empty(n_steps)
    accepted = np.empty(n_steps, dtype=bool)
    proposal_cov = None
    chol = None
    truncated_at = None

    def evaluate(theta, step):
        try:
            return target(theta)
        except ExtrapolationError:
            return -math.inf
        except Exception as err:
            raise ChainAbortedError(
                f"target evaluation failed at iteration {step + 1}: {err}",
                _partial(samples, log_posts, accepted, step, evals, seed),
            ) from err

    for step in range(n_steps):
        adapted = (step + 1) > burn_adapt and hist_count >= 2
        if adapted:
            proposal_cov = s_d * (hist_m2 / (hist_count - 1) + 1e-10 * np.eye(d))
            chol = np.linalg.cholesky(proposal_cov)
            candidate = current + chol @ rng.standard_normal(d)
        else:
            candidate = base_kernel.draw(rng, current)
        lp_candidate = evaluate(candidate, step)
        log_ratio = lp_candidate - lp_current
        took = False
        if _log_uniform(rng) < log_ratio:
            current = candidate
            lp_current = lp_candidate
            took = True
        elif enable_dr:
            if adapted:
                second = current + (chol / math.sqrt(_DR_SHRINK)) @ rng.standard_normal(d)
            else:
                second = current + (base_kernel.step_std / math.sqrt(_DR_SHRINK)) * rng.standard_normal(d)
            lp_second = evaluate(second, step)
            if lp_second == -math.inf:
                log_ratio2 = -math.inf
            else:
                reverse = lp_candidate - lp_second
                if reverse >= 0.0:
                    log_ratio2 = -math.inf
                else:
                    # Stage-one proposal density terms (shared constants cancel).
                    if adapted:
                        z_rev = np.linalg.solve(chol, candidate - second)
                        z_fwd = np.linalg.solve(chol, candidate - current)
                    else:
                        z_rev = (candidate - second) / base_kernel.step_std
                        z_fwd = (candidate - current) / base_kernel.step_std
                    log_q_rev = -0.5 * float(z_rev @ z_rev)
                    log_q_fwd = -0.5 * float(z_fwd @ z_fwd)
                    log_ratio2 = (
                        lp_second + log_q_rev + _log1mexp(reverse)
                    ) - (lp_current + log_q_fwd + _log1mexp(log_ratio))
            if _log_uniform(rng) < log_ratio2:
                current = second
                lp_current = lp_second
                took = True
        accepted[step] = took
        samples[step] = current
        log_posts[step] = lp_current

        hist_count += 1
        delta = current - hist_mean
        hist_mean = hist_mean + delta / hist_count
        hist_m2 = hist_m2 + np.outer(delta, current - hist_mean)

        if max_target_evals is not None and evals >= max_target_evals and step + 1 < n_steps:
            truncated_at = step + 1
            break

    done = truncated_at if truncated_at is not None else n_steps
    info = {"s_d": s_d, "adapted_cov": proposal_cov, "burn_adapt": burn_adapt}
    if truncated_at is not None:
        info["truncated_by_budget"] = True
    return Chain(
        samples=samples[:done].copy() if done < n_steps else samples,
        log_posts=log_posts[:done].copy() if done < n_steps else log_posts,
        accepted=accepted[:done].copy() if done < n_steps else accepted,
        n_target_evals=evals,
        seed=seed,
        info=info,
    )


def thin_and_burn(chain: Chain, burn: int, stride: int) -> Chain:
    """Drop the first ``burn`` samples, then keep every ``stride``-th one.

    With 1-based sample indices the kept originals are burn + stride,
    burn + 2*stride, ...  Metadata counters (seed, n_target_evals) are
    preserved.
    """
    if burn < 0:
        raise ValueError(f"burn must be nonnegative, got {burn}")
    if stride < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    m = len(chain)
    kept = np.arange(burn + stride - 1, m, stride)
    if kept.size == 0:
        raise ValueError(f"burn={burn}, stride={stride} leave an empty chain of length {m}")
    info = dict(chain.info)
    info.update({"burn": burn, "stride": stride, "parent_length": m})
    return Chain(
        samples=chain.samples[kept].copy(),
        log_posts=chain.log_posts[kept].copy(),
        accepted=chain.accepted[kept].copy(),
        n_target_evals=chain.n_target_evals,
        seed=chain.seed,
        info=info,
    )


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def save_chain(csv_path, chain: Chain, meta: dict | None = None) -> None:
    """Write a chain as CSV plus a JSON sidecar of run metadata.

    The CSV columns are step, accepted, logpost, theta_1..theta_d; floats
    use shortest round-trip decimal form, so reloading is bitwise exact.
    """
    csv_path = Path(csv_path)
    d = chain.d
    header = "step,accepted,logpost," + ",".join(f"theta_{k + 1}" for k in range(d))
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i in range(len(chain)):
            row = [str(i + 1), str(int(chain.accepted[i])), repr(float(chain.log_posts[i]))]
            row.extend(repr(float(v)) for v in chain.samples[i])
            fh.write(",".join(row) + "\n")
    sidecar = {
        "seed": chain.seed,
        "n": len(chain),
        "d": d,
        "n_target_evals": chain.n_target_evals,
        "info": _jsonable(chain.info),
    }
    if meta:
        sidecar.update(_jsonable(meta))
    with open(csv_path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def load_chain(csv_path) -> Chain:
    """Reload a chain written by ``save_chain`` (sidecar optional)."""
    csv_path = Path(csv_path)
    with open(csv_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:3] != ["step", "accepted", "logpost"]:
            raise ValueError(f"{csv_path} does not look like a chain CSV")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    d = len(header) - 3
    n = len(rows)
    samples = np.empty((n, d))
    log_posts = np.empty(n)
    accepted = np.empty(n, dtype=bool)
    for i, row in enumerate(rows):
        accepted[i] = bool(int(row[1]))
        log_posts[i] = float(row[2])
        samples[i] = [float(v) for v in row[3:]]
    seed = None
    info: dict = {}
    n_evals = 0
    sidecar_path = csv_path.with_suffix(".json")
    if sidecar_path.exists():
        with open(sidecar_path, encoding="utf-8") as fh:
            sidecar = json.load(fh)
        seed = sidecar.get("seed")
        n_evals = sidecar.get("n_target_evals", 0)
        info = dict(sidecar.get("info", {}))
        for key, value in sidecar.items():
            if key not in ("seed", "n", "d", "n_target_evals", "info"):
                info[key] = value
    return Chain(samples, log_posts, accepted, n_evals, seed, info)
