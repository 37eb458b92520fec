"""
Unit tests for truncated CG and the Riemannian trust-region solver.
"""
import math

import numpy as np
import pytest

from app.domain.entities.kernel_spec import KernelFamily, KernelSpec
from app.domain.entities.manifold_point import Manifold, ManifoldPoint
from app.domain.entities.trust_region import ConstraintBox, TcgStop, TrustRegionConfig
from app.domain.exceptions import OptimizationError
from app.domain.services.kernels import kernel_eval
from app.domain.services.manifolds import geodesic_distance, origin, random_points
from app.domain.services.trust_region import (
    apply_constraint,
    clip_spd,
    fd_gradient,
    multi_start,
    satisfies_constraint,
    tr_minimize,
    truncated_cg,
)


# ==================== Truncated CG ====================

def test_tcg_reaches_newton_step_inside_region():
    """Test that tCG returns -H^-1 g when the Newton step fits the region."""
    hessian = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]])
    grad = np.array([1.0, -2.0, 0.5])

    eta, h_eta, stop = truncated_cg(grad, lambda v: hessian @ v, delta=10.0, kappa=1e-12)

    np.testing.assert_allclose(eta, -np.linalg.solve(hessian, grad), atol=1e-8)
    np.testing.assert_allclose(h_eta, hessian @ eta, atol=1e-8)
    assert stop != TcgStop.EXCEEDED_TR


def test_tcg_stops_on_the_boundary():
    """Test that a too-long step is cut at the trust radius."""
    hessian = np.eye(2)
    grad = np.array([3.0, 4.0])

    eta, _, stop = truncated_cg(grad, lambda v: hessian @ v, delta=0.5)

    assert np.linalg.norm(eta) == pytest.approx(0.5)
    assert stop == TcgStop.EXCEEDED_TR
    assert float(eta @ grad) < 0


def test_tcg_negative_curvature():
    """Test that negative curvature sends the step to the boundary along -g."""
    grad = np.array([1.0, 0.0])

    eta, _, stop = truncated_cg(grad, lambda v: -v, delta=2.0)

    np.testing.assert_allclose(eta, [-2.0, 0.0])
    assert stop == TcgStop.NEGATIVE_CURVATURE


def test_tcg_zero_gradient():
    """Test that a zero gradient gives a zero step."""
    eta, h_eta, _ = truncated_cg(np.zeros(3), lambda v: v, delta=1.0)

    assert not np.any(eta)
    assert not np.any(h_eta)


# ==================== Constraint ====================

def test_clip_spd_eigenvalues():
    """Test eigenvalue clipping into the box."""
    box = ConstraintBox.create(0.5, 2.0)
    clipped = clip_spd(np.diag([0.1, 5.0]), box)

    np.testing.assert_allclose(np.linalg.eigvalsh(clipped), [0.5, 2.0])


def test_apply_constraint_only_touches_spd():
    """Test that non-SPD points pass through the constraint unchanged."""
    box = ConstraintBox.create(0.5, 2.0)
    point = origin(Manifold.sphere(2))
    spd_point = ManifoldPoint.create(Manifold.spd(2), np.diag([0.1, 1.0]))

    assert apply_constraint(point, box) is point
    assert satisfies_constraint(apply_constraint(spd_point, box), box)
    assert not satisfies_constraint(spd_point, box)


def test_constraint_box_validation():
    """Test that the eigenvalue box needs 0 < lam_min < lam_max."""
    with pytest.raises(ValueError):
        ConstraintBox.create(2.0, 1.0)
    with pytest.raises(ValueError):
        ConstraintBox.create(0.0, 1.0)


def test_trust_region_config_validation():
    """Test acceptance-ratio validation."""
    with pytest.raises(ValueError):
        TrustRegionConfig.create(Manifold.sphere(2), rho_accept=0.8, rho_expand=0.5)


def test_trust_region_config_uses_diameter():
    """Test manifold-dependent default radii."""
    config = TrustRegionConfig.create(Manifold.sphere(2))

    assert config.delta_max == pytest.approx(math.pi)
    assert config.delta0 == pytest.approx(0.1 * math.pi)


# ==================== Solver ====================

def test_minimize_linear_function_on_sphere():
    """Test that -<x, t> is minimized at t on S^2."""
    sphere = Manifold.sphere(2)
    target = np.array([1.0, 2.0, -2.0]) / 3.0
    start = ManifoldPoint.create(sphere, [0.0, 0.0, 1.0])

    result = tr_minimize(lambda p: -float(p.data @ target), sphere, start)

    assert result.value == pytest.approx(-1.0, abs=1e-8)
    assert geodesic_distance(result.point, ManifoldPoint.create(sphere, target)) < 1e-3


def test_minimize_on_torus_across_the_seam():
    """Test convergence to a minimum across the coordinate seam of T^2."""
    torus = Manifold.torus(2)
    center = np.array([0.95, 0.02])

    def objective(p):
        return float(np.sum(1.0 - np.cos(2.0 * math.pi * (p.data - center))))

    result = tr_minimize(objective, torus, ManifoldPoint.create(torus, [0.1, 0.85]))

    assert result.value < 1e-8
    assert geodesic_distance(result.point, ManifoldPoint.create(torus, center)) < 1e-3


def test_minimize_respects_spd_constraint():
    """Test that iterates stay inside the SPD eigenvalue box."""
    spd = Manifold.spd(2)
    box = ConstraintBox.create(0.5, 3.0)
    target = ManifoldPoint.create(spd, np.diag([10.0, 1.0]))
    start = ManifoldPoint.create(spd, np.eye(2))

    result = tr_minimize(lambda p: geodesic_distance(p, target) ** 2, spd, start, constraint=box)

    assert satisfies_constraint(result.point, box, tol=1e-9)
    assert result.value <= geodesic_distance(start, target) ** 2
    assert np.linalg.eigvalsh(result.point.data)[-1] == pytest.approx(3.0, abs=1e-3)


def test_minimize_clips_to_euclidean_box():
    """Test that Euclidean iterates stay in their box."""
    box = Manifold.euclidean(2, -1.0, 1.0)
    start = ManifoldPoint.create(box, [0.0, 0.0])

    result = tr_minimize(lambda p: float(np.sum((p.data - 3.0) ** 2)), box, start)

    assert np.all(result.point.data <= 1.0)
    np.testing.assert_allclose(result.point.data, [1.0, 1.0], atol=1e-3)


def test_multi_start_keeps_the_best_run():
    """Test that multi_start never returns worse than the incumbent."""
    sphere = Manifold.sphere(2)
    target = np.array([0.0, 1.0, 0.0])
    incumbent = ManifoldPoint.create(sphere, [0.0, 0.6, 0.8])

    def objective(p):
        return float(np.sum((p.data - target) ** 2))

    result = multi_start(objective, sphere, 3, rng=np.random.default_rng(0), incumbent=incumbent)

    assert result.value <= objective(incumbent)
    assert result.value == pytest.approx(0.0, abs=1e-8)


def test_multi_start_rejects_zero_starts():
    """Test that at least one start is required."""
    with pytest.raises(ValueError):
        multi_start(lambda p: 0.0, Manifold.sphere(2), 0, rng=np.random.default_rng(0))


def test_multi_start_all_failures():
    """Test that OptimizationError is raised when every start fails."""
    with pytest.raises(OptimizationError):
        multi_start(lambda p: math.nan, Manifold.sphere(2), 2, rng=np.random.default_rng(1))


def test_rayleigh_quotient_on_s9():
    """Test that x^T A x on S^9 reaches the smallest eigenvalue of A."""
    rng = np.random.default_rng(4)
    q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
    matrix = q @ np.diag(np.arange(1.0, 11.0)) @ q.T
    sphere = Manifold.sphere(9)
    config = TrustRegionConfig.create(sphere, max_iters=200)

    result = multi_start(lambda p: float(p.data @ matrix @ p.data), sphere, 5, config=config, rng=rng)

    assert result.value == pytest.approx(1.0, abs=1e-6)
    assert abs(float(result.point.data @ q[:, 0])) == pytest.approx(1.0, abs=1e-3)


def test_multi_start_requires_a_generator():
    """Test that random starts are never drawn from an unseeded generator."""
    with pytest.raises(TypeError):
        multi_start(lambda p: 0.0, Manifold.sphere(2), 1)


def test_accepted_iterates_never_increase():
    """Test that the accepted objective values are non-increasing."""
    rng = np.random.default_rng(17)
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    matrix = q @ np.diag([1.0, 2.0, 3.0, 5.0, 8.0]) @ q.T
    sphere = Manifold.sphere(4)
    start = ManifoldPoint.create(sphere, np.ones(5) / math.sqrt(5.0))

    result = tr_minimize(lambda p: float(p.data @ matrix @ p.data), sphere, start)

    values = np.array(result.accepted_values)
    assert len(values) > 1
    assert values[0] == pytest.approx(float(start.data @ matrix @ start.data))
    assert values[-1] == result.value
    assert np.all(np.diff(values) <= 0)


def test_constrained_runs_only_evaluate_feasible_points():
    """Test that every candidate seen by the objective satisfies the eigenvalue box."""
    spd = Manifold.spd(2)
    box = ConstraintBox.create(0.5, 2.0)
    target = ManifoldPoint.create(spd, np.diag([4.0, 0.1]))
    seen = []

    def objective(p):
        seen.append(p)
        return geodesic_distance(p, target) ** 2

    multi_start(objective, spd, 3, rng=np.random.default_rng(18), constraint=box)

    assert seen
    assert all(satisfies_constraint(p, box) for p in seen)


def test_fd_gradient_is_richardson_consistent():
    """Test that the finite-difference gradient agrees with the half-step estimate."""
    sphere = Manifold.sphere(2)
    rng = np.random.default_rng(19)
    spec = KernelSpec.create(KernelFamily.RIEMANNIAN_MATERN, nu=2.5, kappa=0.6)
    reference = random_points(rng, sphere, 1)[0]

    def objective(p):
        return kernel_eval(spec, p, reference)

    for point in random_points(rng, sphere, 20):
        full = fd_gradient(objective, point, 1e-4)
        half = fd_gradient(objective, point, 5e-5)
        assert np.linalg.norm(full - half) <= 1e-3 * np.linalg.norm(half) + 1e-9
