"""
Unit tests for GP conditioning, marginal likelihood and fitting.
"""
import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal, ortho_group

from app.domain.entities.gp_model import GpBounds, GpFitConfig
from app.domain.entities.kernel_spec import KernelFamily, KernelSpec
from app.domain.entities.manifold_point import Manifold, ManifoldPoint
from app.domain.services.gaussian_process import (
    condition,
    fit,
    jitter_ladder,
    lml_gradient,
    log_marginal_likelihood,
    posterior,
    posterior_batch,
)
from app.domain.services.kernels import gram
from app.domain.services.manifolds import geodesic_distance, origin, random_points


def _sphere_data(n=8, seed=0):
    rng = np.random.default_rng(seed)
    points = random_points(rng, Manifold.sphere(2), n)
    targets = np.array([p.data[2] + 0.5 * p.data[0] for p in points])
    return points, targets


SPEC = KernelSpec.create(KernelFamily.RIEMANNIAN_MATERN, nu=2.5, kappa=0.6, sigma2=1.5)


def test_jitter_ladder_starts_at_zero():
    """Test the jitter ladder from 0 through 1e-10 to 1e-4."""
    ladder = jitter_ladder(1e-10, 1e-4)

    assert ladder[0] == 0.0
    assert ladder[1] == pytest.approx(1e-10)
    assert ladder[-1] == pytest.approx(1e-4)
    assert ladder == sorted(ladder)


def test_lml_matches_multivariate_normal():
    """Test the cached evidence against scipy's Gaussian log density."""
    points, targets = _sphere_data()
    model = condition(points, targets, SPEC, noise=0.01, mean=0.2)
    cov = gram(SPEC, points) + (0.01 + model.jitter) * np.eye(len(points))
    expected = multivariate_normal(mean=np.full(len(points), 0.2), cov=cov).logpdf(targets)

    assert model.lml == pytest.approx(expected, rel=1e-9)
    assert log_marginal_likelihood(model) == pytest.approx(model.lml)


def test_posterior_interpolates_noise_free_data():
    """Test that the noise-free posterior reproduces observations with near-zero variance."""
    points, targets = _sphere_data()
    model = condition(points, targets, SPEC, noise=0.0)
    means, variances = posterior_batch(model, points)

    np.testing.assert_allclose(means, targets, atol=1e-5)
    assert np.all(variances < 1e-5)


def test_posterior_far_from_data_reverts_to_prior():
    """Test prior mean and variance far away from the observations."""
    torus = Manifold.torus(1)
    kappa = 0.02
    spec = KernelSpec.create(KernelFamily.RIEMANNIAN_SE, kappa=kappa, sigma2=2.0)
    inputs = [ManifoldPoint.create(torus, [0.0]), ManifoldPoint.create(torus, [0.05])]
    model = condition(inputs, [1.0, 3.0], spec, noise=1e-6)

    mean, variance = posterior(model, ManifoldPoint.create(torus, [0.5]))
    assert mean == pytest.approx(2.0, abs=1e-6)
    assert variance == pytest.approx(2.0, rel=1e-6)


def test_posterior_variance_bounds():
    """Test that predictive variances lie in [0, sigma2]."""
    points, targets = _sphere_data()
    model = condition(points, targets, SPEC, noise=1e-3)
    rng = np.random.default_rng(1)
    _, variances = posterior_batch(model, random_points(rng, Manifold.sphere(2), 20))

    assert np.all(variances >= 0)
    assert np.all(variances <= SPEC.sigma2)


def test_duplicate_inputs_use_jitter():
    """Test that a singular Gram matrix is rescued by the jitter ladder."""
    point = origin(Manifold.sphere(2))
    model = condition([point, point], [1.0, 1.0], SPEC, noise=0.0)

    assert model.jitter > 0
    assert np.all(np.isfinite(model.alpha))


def test_condition_rejects_bad_targets():
    """Test validation of target vectors."""
    points, _ = _sphere_data(3)
    with pytest.raises(ValueError):
        condition(points, [1.0, 2.0], SPEC, noise=0.0)
    with pytest.raises(ValueError):
        condition(points, [1.0, math.nan, 2.0], SPEC, noise=0.0)


def test_lml_gradient_matches_finite_differences():
    """Test the evidence gradient in log sigma2 and log noise."""
    points, targets = _sphere_data()
    noise = 0.05
    model = condition(points, targets, SPEC, noise=noise)
    grad = lml_gradient(model)
    step = 1e-5

    def lml_at(sigma2, noise_value):
        return condition(points, targets, SPEC.with_sigma2(sigma2), noise=noise_value, mean=model.mean).lml

    fd_sigma = (lml_at(SPEC.sigma2 * math.exp(step), noise) - lml_at(SPEC.sigma2 * math.exp(-step), noise)) / (2 * step)
    fd_noise = (lml_at(SPEC.sigma2, noise * math.exp(step)) - lml_at(SPEC.sigma2, noise * math.exp(-step))) / (2 * step)
    assert grad[1] == pytest.approx(fd_sigma, rel=1e-4, abs=1e-6)
    assert grad[2] == pytest.approx(fd_noise, rel=1e-4, abs=1e-6)


def test_fit_improves_evidence_and_respects_bounds():
    """Test that fitting from a warm start does not lose evidence and stays inside the box."""
    points, targets = _sphere_data(12)
    bounds = GpBounds.create(kappa=(0.05, 3.0), sigma2=(1e-3, 10.0), noise=(1e-6, 0.1))
    initial = condition(points, targets, KernelSpec.create(KernelFamily.RIEMANNIAN_MATERN, nu=2.5), noise=0.01)
    model = fit(
        points,
        targets,
        SPEC,
        bounds=bounds,
        config=GpFitConfig.create(restarts=2),
        rng=np.random.default_rng(0),
        warm_start=(initial.spec, 0.01),
    )

    assert model.lml >= initial.lml - 1e-6
    assert 0.05 - 1e-9 <= model.spec.kappa <= 3.0 + 1e-9
    assert 1e-3 - 1e-12 <= model.spec.sigma2 <= 10.0 + 1e-9
    assert 1e-6 - 1e-12 <= model.noise <= 0.1 + 1e-9


def test_fit_with_fixed_noise():
    """Test that a fixed noise variance is kept."""
    points, targets = _sphere_data(6)
    model = fit(points, targets, SPEC, config=GpFitConfig.create(restarts=1, noise=1e-4))

    assert model.noise == 1e-4


def test_fit_selects_smoothness_from_grid():
    """Test that optimize_nu picks a value from the grid."""
    points, targets = _sphere_data(8)
    config = GpFitConfig.create(restarts=1, optimize_nu=True, nu_grid=(1.5, math.inf))
    model = fit(points, targets, SPEC, config=config)

    assert model.spec.nu in (1.5, math.inf)
    assert model.hyperparameters["family"] in ("riemannian_matern", "riemannian_se")


def test_fit_config_validation():
    """Test invalid fit configurations."""
    with pytest.raises(ValueError):
        GpFitConfig.create(restarts=0)
    with pytest.raises(ValueError):
        GpFitConfig.create(noise=-1.0)
    with pytest.raises(ValueError):
        GpBounds.create(kappa=(1.0, 0.5))


def test_posterior_uses_geometry():
    """Test that correlation decays with geodesic distance on the sphere."""
    sphere = Manifold.sphere(2)
    north = origin(sphere)
    model = condition([north], [1.0], SPEC, noise=1e-6, mean=0.0)
    near = ManifoldPoint.create(sphere, [math.sin(0.2), 0.0, math.cos(0.2)])
    far = ManifoldPoint.create(sphere, [math.sin(1.5), 0.0, math.cos(1.5)])

    assert geodesic_distance(north, near) < geodesic_distance(north, far)
    assert posterior(model, near)[0] > posterior(model, far)[0]


def test_posterior_mean_is_isometry_invariant():
    """Test that moving training and test inputs by one isometry leaves the posterior unchanged."""
    sphere = Manifold.sphere(2)
    rng = np.random.default_rng(21)
    points, targets = _sphere_data(n=8, seed=21)
    tests = random_points(rng, sphere, 10)
    q = ortho_group.rvs(3, random_state=rng)

    def moved(ps):
        return [ManifoldPoint.create(sphere, q @ p.data) for p in ps]

    means, variances = posterior_batch(condition(points, targets, SPEC, noise=1e-3), tests)
    moved_means, moved_variances = posterior_batch(condition(moved(points), targets, SPEC, noise=1e-3), moved(tests))

    np.testing.assert_allclose(moved_means, means, atol=1e-7)
    np.testing.assert_allclose(moved_variances, variances, atol=1e-7)


def test_posterior_mean_is_translation_invariant_on_torus():
    """Test posterior invariance under a common translation mod 1 on T^2."""
    torus = Manifold.torus(2)
    rng = np.random.default_rng(22)
    points = random_points(rng, torus, 8)
    targets = np.array([math.sin(2 * math.pi * p.data[0]) + p.data[1] for p in points])
    tests = random_points(rng, torus, 10)
    shift = np.array([0.25, 0.6])
    spec = KernelSpec.create(KernelFamily.RIEMANNIAN_SE, kappa=0.2)

    def moved(ps):
        return [ManifoldPoint.create(torus, p.data + shift) for p in ps]

    means, _ = posterior_batch(condition(points, targets, spec, noise=1e-3), tests)
    moved_means, _ = posterior_batch(condition(moved(points), targets, spec, noise=1e-3), moved(tests))

    np.testing.assert_allclose(moved_means, means, atol=1e-7)


def test_extra_observation_never_increases_variance():
    """Test that conditioning on more data shrinks the posterior variance everywhere."""
    rng = np.random.default_rng(23)
    points, targets = _sphere_data(n=10, seed=23)
    tests = random_points(rng, Manifold.sphere(2), 100)

    previous = None
    for n in range(4, 11):
        _, variances = posterior_batch(condition(points[:n], targets[:n], SPEC, noise=1e-4, mean=0.0), tests)
        if previous is not None:
            assert np.all(variances <= previous + 1e-9)
        previous = variances
