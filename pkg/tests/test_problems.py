"""Priors, noise models, Bayesian problems, and the conjugate oracle."""

import numpy as np
import pytest
from scipy import stats

from mapmcmc.problems import (
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


def test_gaussian_prior_matches_scipy(rng):
    prior = GaussianPrior(mean=np.array([1.0, -2.0]), cov_diag=np.array([0.5, 3.0]))
    for _ in range(10):
        t = rng.normal(size=2)
        expected = stats.multivariate_normal.logpdf(t, [1.0, -2.0], np.diag([0.5, 3.0]))
        assert prior.log_density(t) == pytest.approx(expected, rel=1e-12)


def test_lognormal_prior_median_one():
    prior = LogNormalPrior.median_one(3, var_log=0.05)
    t = np.array([0.8, 1.0, 1.3])
    expected = stats.lognorm.logpdf(t, s=np.sqrt(0.05), scale=1.0).sum()
    assert prior.log_density(t) == pytest.approx(expected, rel=1e-12)
    assert prior.log_density(np.array([1.0, -0.1, 1.0])) == -np.inf
    assert prior.log_density(np.array([0.0, 1.0, 1.0])) == -np.inf


def test_lognormal_moment_matched_moments():
    prior = LogNormalPrior.moment_matched(1, mean=1.0, var=0.05)
    sigma2 = float(prior.var_log[0])
    mu = float(prior.mu_log[0])
    assert np.exp(mu + sigma2 / 2) == pytest.approx(1.0, rel=1e-12)
    lognormal_var = (np.exp(sigma2) - 1.0) * np.exp(2 * mu + sigma2)
    assert lognormal_var == pytest.approx(0.05, rel=1e-12)


def test_noise_model_diag_vs_dense_whiten(rng):
    variances = np.array([0.5, 2.0, 1.0])
    diag = NoiseModel(cov=variances)
    dense = NoiseModel(cov=np.diag(variances))
    v = rng.normal(size=3)
    np.testing.assert_allclose(diag.whiten(v), dense.whiten(v), rtol=1e-12)
    # whitening the sqrt-transformed noise must give unit covariance
    draws = np.array([diag.whiten(diag.sqrt_apply(rng.normal(size=3))) for _ in range(4000)])
    np.testing.assert_allclose(np.cov(draws.T), np.eye(3), atol=0.15)


def test_noise_model_iid():
    noise = NoiseModel.iid(0.04, 5)
    np.testing.assert_allclose(noise.whiten(np.full(5, 0.2)), np.ones(5), rtol=1e-12)


def test_misfit_frozen_value():
    model = LinearForwardModel(np.array([[1.0, 0.0], [0.0, 2.0]]))
    noise = NoiseModel.iid(0.25, 2)
    prior = GaussianPrior(mean=np.zeros(2), cov_diag=np.ones(2))
    problem = BayesianProblem(model=model, prior=prior, noise=noise, data=np.array([1.0, 0.0]))
    # G(theta) = (1, 2); residual (0, 2); misfit = 0.5 * (0 + 4/0.25) = 8
    assert problem.misfit(np.array([1.0, 1.0])) == pytest.approx(8.0, rel=1e-12)


def test_log_posterior_is_prior_plus_negative_misfit():
    model = LinearForwardModel(np.array([[1.0, 0.5]]))
    noise = NoiseModel.iid(0.1, 1)
    prior = GaussianPrior(mean=np.zeros(2), cov_diag=np.ones(2))
    problem = BayesianProblem(model=model, prior=prior, noise=noise, data=np.array([0.3]))
    t = np.array([0.2, -0.4])
    expected = prior.log_density(t) - problem.misfit(t)
    assert problem.log_posterior(t) == pytest.approx(expected, rel=1e-12)


def test_prior_shortcircuit_skips_model():
    calls = {"n": 0}

    class Counting(ForwardModel):
        d_in = 2
        d_out = 1
        cost = "hifi"

        def eval(self, theta):
            calls["n"] += 1
            return np.zeros(1)

    prior = LogNormalPrior.median_one(2, 0.05)
    problem = BayesianProblem(
        model=Counting(), prior=prior, noise=NoiseModel.iid(1.0, 1), data=np.zeros(1)
    )
    assert problem.log_posterior(np.array([-1.0, 1.0])) == -np.inf
    assert calls["n"] == 0
    problem.log_posterior(np.array([1.0, 1.0]))
    assert calls["n"] == 1


def test_extrapolation_propagates():
    class Boxed(ForwardModel):
        d_in = 1
        d_out = 1
        cost = "lofi"

        def eval(self, theta):
            if abs(theta[0]) > 1:
                raise ExtrapolationError("outside")
            return theta

    problem = BayesianProblem(
        model=Boxed(),
        prior=GaussianPrior(mean=np.zeros(1), cov_diag=np.ones(1)),
        noise=NoiseModel.iid(1.0, 1),
        data=np.zeros(1),
    )
    with pytest.raises(ExtrapolationError):
        problem.log_posterior(np.array([2.0]))


def test_synthesize_data_deterministic_and_scaled():
    model = LinearForwardModel(np.vstack([np.eye(2), np.eye(2)]))
    noise = NoiseModel.iid(0.01, 4)
    theta = np.array([1.0, -1.0])
    y1 = synthesize_data(model, theta, noise, seed=5)
    y2 = synthesize_data(model, theta, noise, seed=5)
    np.testing.assert_array_equal(y1, y2)
    residual = y1 - model.eval(theta)
    assert np.all(np.abs(residual) < 0.5)  # 5 sigma at sigma = 0.1
    assert np.any(residual != 0.0)


def test_linear_gaussian_posterior_identity_case():
    """A = I, prior N(0, I), noise sigma^2 I: posterior mean y/(1+sigma^2),
    covariance sigma^2/(1+sigma^2) I."""
    sigma2 = 0.25
    y = np.array([1.0, -2.0])
    prior = GaussianPrior(mean=np.zeros(2), cov_diag=np.ones(2))
    noise = NoiseModel.iid(sigma2, 2)
    mean, cov = linear_gaussian_posterior(np.eye(2), prior, noise, y)
    np.testing.assert_allclose(mean, y / (1 + sigma2), rtol=1e-12)
    np.testing.assert_allclose(cov, np.eye(2) * sigma2 / (1 + sigma2), rtol=1e-12)


def test_linear_gaussian_posterior_against_grid_quadrature():
    """Cross-check the closed form against brute-force normalization of the
    unnormalized posterior density on a grid."""
    matrix = np.array([[1.0, 0.3], [0.2, 0.8], [0.5, 0.5]])
    prior = GaussianPrior(mean=np.array([0.2, -0.1]), cov_diag=np.array([1.0, 0.5]))
    noise = NoiseModel.iid(0.04, 3)
    y = np.array([0.5, 0.1, 0.4])
    mean, cov = linear_gaussian_posterior(matrix, prior, noise, y)

    problem = BayesianProblem(
        model=LinearForwardModel(matrix), prior=prior, noise=noise, data=y
    )
    grid = np.linspace(-2.5, 2.5, 401)
    xx, yy = np.meshgrid(grid, grid, indexing="ij")
    log_vals = np.array(
        [problem.log_posterior(np.array([a, b])) for a, b in zip(xx.ravel(), yy.ravel())]
    )
    weights = np.exp(log_vals - log_vals.max())
    weights /= weights.sum()
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    grid_mean = weights @ pts
    centered = pts - grid_mean
    grid_cov = (weights[:, None] * centered).T @ centered
    np.testing.assert_allclose(mean, grid_mean, atol=2e-4)
    np.testing.assert_allclose(cov, grid_cov, atol=2e-4)


def test_linear_forward_model_shapes():
    model = LinearForwardModel(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
    assert model.d_in == 2 and model.d_out == 3
    np.testing.assert_allclose(model.eval(np.array([1.0, 1.0])), [3.0, 7.0, 11.0])
