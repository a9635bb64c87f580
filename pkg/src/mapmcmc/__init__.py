"""Transport-map preconditioned MCMC for multifidelity Bayesian inversion.

Builds monotone triangular transport maps from a cheap low-fidelity
posterior and uses them to precondition Metropolis-Hastings sampling of an
expensive high-fidelity posterior.  Ships two PDE testbeds (a nonlinear
diffusion-reaction equation with a POD-Galerkin reduced model, and an
Euler-Bernoulli beam with a gridded surrogate) plus reference samplers and
effective-sample-size diagnostics.
"""

from .diagnostics import DegenerateSeriesError, EssEntry, EssReport, ess, iact, summarize
from .mapbuild import (
    BuildConfig,
    BuildError,
    ReferenceDensity,
    build_map,
    kl_objective,
    objective_gradient,
    pushforward_samples,
)
from .polybasis import MultiIndexSet, eval_basis, total_degree_set
from .problems import (
    BayesianProblem,
    ExtrapolationError,
    ForwardModel,
    GaussianPrior,
    LinearForwardModel,
    LogNormalPrior,
    NoiseModel,
    linear_gaussian_posterior,
    synthesize_data,
)
from .samplers import (
    Chain,
    ChainAbortedError,
    IndependenceProposal,
    RandomWalkProposal,
    adaptive_metropolis_dram,
    load_chain,
    metropolis_hastings,
    mfmh,
    save_chain,
    thin_and_burn,
)
from .targets import BananaDensity, GaussianDensity, exact_banana_map
from .transport import (
    DeepMap,
    MapComponent,
    MapInversionError,
    TriangularMap,
    compose,
    gaussian_map,
    identity_map,
    load_map,
    map_from_json,
    map_to_json,
    pullback_logdensity,
    save_map,
)

__version__ = "0.1.0"

__all__ = [
    "BananaDensity",
    "BayesianProblem",
    "BuildConfig",
    "BuildError",
    "Chain",
    "ChainAbortedError",
    "DeepMap",
    "DegenerateSeriesError",
    "EssEntry",
    "EssReport",
    "ExtrapolationError",
    "ForwardModel",
    "GaussianDensity",
    "GaussianPrior",
    "IndependenceProposal",
    "LinearForwardModel",
    "LogNormalPrior",
    "MapComponent",
    "MapInversionError",
    "MultiIndexSet",
    "NoiseModel",
    "RandomWalkProposal",
    "ReferenceDensity",
    "TriangularMap",
    "adaptive_metropolis_dram",
    "build_map",
    "compose",
    "ess",
    "eval_basis",
    "exact_banana_map",
    "gaussian_map",
    "iact",
    "identity_map",
    "kl_objective",
    "linear_gaussian_posterior",
    "load_chain",
    "load_map",
    "map_from_json",
    "map_to_json",
    "metropolis_hastings",
    "mfmh",
    "objective_gradient",
    "pullback_logdensity",
    "pushforward_samples",
    "save_chain",
    "save_map",
    "summarize",
    "synthesize_data",
    "thin_and_burn",
    "total_degree_set",
]
