"""
Riemannian trust-region service.
Part of Domain layer - derivative-free RTR with truncated conjugate gradients.

The objective is pulled back to the tangent space at the current iterate
through the exponential map; gradients and Hessian-vector products are
central finite differences in the orthonormal tangent basis.
"""
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.domain.entities.manifold_point import Manifold, ManifoldKind, ManifoldPoint
from app.domain.entities.trust_region import (
    ConstraintBox,
    StopReason,
    TcgStop,
    TrustRegionConfig,
    TrustRegionResult,
)
from app.domain.exceptions import GeometryError, ObjectiveError, OptimizationError
from app.domain.services.manifolds import (
    geodesic_distance,
    log_coeffs,
    project_to_domain,
    random_points,
    retract,
)

logger = logging.getLogger(__name__)

Objective = Callable[[ManifoldPoint], float]

RHO_REGULARIZATION = 1e3
SHRINK_THRESHOLD = 0.25
MIN_RADIUS_RATIO = 1e-10


# ==================== Constraint ====================

def clip_spd(data: np.ndarray, box: ConstraintBox) -> np.ndarray:
    """Clip the eigenvalues of a symmetric matrix into the box."""
    w, v = np.linalg.eigh(0.5 * (data + data.T))
    clipped = (v * np.clip(w, box.lam_min, box.lam_max)) @ v.T
    return 0.5 * (clipped + clipped.T)


def apply_constraint(point: ManifoldPoint, box: Optional[ConstraintBox]) -> ManifoldPoint:
    """Project SPD points (or SPD factors) into the eigenvalue box; other points pass through."""
    if box is None:
        return point
    manifold = point.manifold
    if manifold.kind == ManifoldKind.PRODUCT:
        parts = [apply_constraint(part, box) for part in point.parts]
        if all(a is b for a, b in zip(parts, point.parts)):
            return point
        return ManifoldPoint.from_parts(manifold, parts)
    if manifold.kind != ManifoldKind.SPD:
        return point
    w = np.linalg.eigvalsh(point.data)
    if w[0] >= box.lam_min and w[-1] <= box.lam_max:
        return point
    return ManifoldPoint.unchecked(manifold, clip_spd(point.data, box))


def satisfies_constraint(point: ManifoldPoint, box: Optional[ConstraintBox], tol: float = 1e-12) -> bool:
    """True when every SPD component has eigenvalues in the box up to ``tol``."""
    if box is None:
        return True
    if point.manifold.kind == ManifoldKind.PRODUCT:
        return all(satisfies_constraint(part, box, tol) for part in point.parts)
    if point.manifold.kind != ManifoldKind.SPD:
        return True
    w = np.linalg.eigvalsh(point.data)
    return bool(w[0] >= box.lam_min - tol and w[-1] <= box.lam_max + tol)


# ==================== Truncated CG ====================

def truncated_cg(
    grad: np.ndarray,
    hessvec: Callable[[np.ndarray], np.ndarray],
    delta: float,
    kappa: float = 0.1,
    theta: float = 1.0,
    max_iters: Optional[int] = None,
    min_iters: int = 1,
) -> Tuple[np.ndarray, np.ndarray, TcgStop]:
    """
    Steihaug-Toint truncated CG for min <g, eta> + 1/2 <eta, H eta>, |eta| <= delta.

    Returns the step, the Hessian applied to it and the stop reason. On
    negative curvature or a radius breach the step ends on the boundary.
    """
    grad = np.asarray(grad, dtype=float)
    max_iters = max_iters if max_iters is not None else 2 * grad.size
    eta = np.zeros_like(grad)
    h_eta = np.zeros_like(grad)

    r = grad.copy()
    r_r = float(r @ r)
    norm_r0 = math.sqrt(r_r)
    if norm_r0 == 0.0:
        return eta, h_eta, TcgStop.REACHED_TARGET_SUPERLINEAR

    z_r = r_r
    d_pd = z_r
    direction = -r
    e_pe = 0.0
    e_pd = 0.0
    model_value = 0.0
    stop = TcgStop.MAX_INNER_ITER

    for j in range(max_iters):
        h_dir = hessvec(direction)
        d_hd = float(direction @ h_dir)
        alpha = z_r / d_hd if d_hd != 0 else math.inf
        e_pe_new = e_pe + 2.0 * alpha * e_pd + alpha ** 2 * d_pd

        if d_hd <= 0 or e_pe_new >= delta ** 2:
            tau = (-e_pd + math.sqrt(e_pd * e_pd + d_pd * (delta ** 2 - e_pe))) / d_pd
            eta = eta + tau * direction
            h_eta = h_eta + tau * h_dir
            stop = TcgStop.NEGATIVE_CURVATURE if d_hd <= 0 else TcgStop.EXCEEDED_TR
            break

        e_pe = e_pe_new
        new_eta = eta + alpha * direction
        new_h_eta = h_eta + alpha * h_dir
        new_model_value = float(new_eta @ grad) + 0.5 * float(new_eta @ new_h_eta)
        if new_model_value >= model_value:
            stop = TcgStop.MODEL_INCREASED
            break
        eta, h_eta, model_value = new_eta, new_h_eta, new_model_value

        r = r + alpha * h_dir
        r_r = float(r @ r)
        norm_r = math.sqrt(r_r)
        if j >= min_iters - 1 and norm_r <= norm_r0 * min(norm_r0 ** theta, kappa):
            stop = TcgStop.REACHED_TARGET_LINEAR if kappa < norm_r0 ** theta else TcgStop.REACHED_TARGET_SUPERLINEAR
            break

        z_r_old = z_r
        z_r = r_r
        beta = z_r / z_r_old
        direction = -r + beta * direction
        e_pd = beta * (e_pd + alpha * d_pd)
        d_pd = z_r + beta * beta * d_pd

    return eta, h_eta, stop


# ==================== Pullback calculus ====================

class _Pullback:
    """Objective composed with retraction, domain projection and the constraint at a base point."""

    def __init__(self, objective: Objective, base: ManifoldPoint, constraint: Optional[ConstraintBox], fd_step: float):
        self.objective = objective
        self.base = base
        self.constraint = constraint
        self.dim = base.manifold.intrinsic_dim
        self.h = fd_step * max(1.0, float(np.linalg.norm(base.data)))
        self.t = max(1e-4, 10.0 * self.h)
        self.n_evals = 0

    def point(self, coeffs: np.ndarray) -> ManifoldPoint:
        return apply_constraint(project_to_domain(retract(self.base, coeffs)), self.constraint)

    def values(self, coeff_rows: Sequence[np.ndarray]) -> np.ndarray:
        points = [self.point(c) for c in coeff_rows]
        batch = getattr(self.objective, "batch", None)
        values = np.asarray(batch(points), dtype=float) if batch is not None else np.array(
            [float(self.objective(p)) for p in points]
        )
        self.n_evals += len(points)
        if not np.all(np.isfinite(values)):
            raise ObjectiveError("Objective returned a non-finite value")
        return values

    def gradient(self, at: Optional[np.ndarray] = None) -> np.ndarray:
        at = np.zeros(self.dim) if at is None else at
        eye = np.eye(self.dim) * self.h
        stencil = [at + e for e in eye] + [at - e for e in eye]
        values = self.values(stencil)
        return (values[: self.dim] - values[self.dim:]) / (2.0 * self.h)

    def hessvec(self, grad0: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        def apply(v: np.ndarray) -> np.ndarray:
            norm = float(np.linalg.norm(v))
            if norm == 0.0:
                return np.zeros_like(v)
            shifted = self.gradient(self.t * v / norm)
            return (shifted - grad0) * (norm / self.t)

        return apply


def fd_gradient(
    objective: Objective,
    point: ManifoldPoint,
    fd_step: float,
    constraint: Optional[ConstraintBox] = None,
) -> np.ndarray:
    """Central finite-difference Riemannian gradient in the orthonormal tangent basis at ``point``."""
    return _Pullback(objective, point, constraint, fd_step).gradient()


# ==================== Solver ====================

def tr_minimize(
    objective: Objective,
    manifold: Manifold,
    x0: ManifoldPoint,
    config: Optional[TrustRegionConfig] = None,
    constraint: Optional[ConstraintBox] = None,
) -> TrustRegionResult:
    """
    Minimize ``objective`` on ``manifold`` from ``x0``.

    Steps whose constraint projection moves the candidate by more than the
    trust radius are rejected; otherwise the step is replaced by the
    logarithm of the projected point and the model is re-evaluated on it.

    Raises:
        ObjectiveError: If the objective is not finite at x0
    """
    config = config or TrustRegionConfig.create(manifold)
    x = apply_constraint(project_to_domain(x0), constraint)
    fx = float(objective(x))
    n_evals = 1
    if not math.isfinite(fx):
        raise ObjectiveError(f"Objective is {fx} at the start point")

    delta = config.delta0
    status = StopReason.MAX_ITERS
    iterations = 0
    accepted = [fx]
    pull = _Pullback(objective, x, constraint, config.fd_step)
    try:
        grad = pull.gradient()
    except ObjectiveError:
        return TrustRegionResult(x, fx, 0, math.nan, n_evals + pull.n_evals, StopReason.NON_FINITE, (fx,))
    grad_norm = float(np.linalg.norm(grad))

    for k in range(1, config.max_iters + 1):
        iterations = k
        if grad_norm < config.grad_tol:
            status = StopReason.GRAD_TOL
            break
        try:
            hessvec = pull.hessvec(grad)
            eta, h_eta, stop = truncated_cg(
                grad, hessvec, delta, config.tcg_kappa, config.tcg_theta, config.tcg_max_iters
            )
            raw = retract(x, eta)
            candidate = pull.point(eta)
            if candidate != raw:
                if geodesic_distance(raw, candidate) > delta:
                    delta /= 4.0
                    continue
                eta = log_coeffs(x, candidate)
                h_eta = hessvec(eta)
            f_prop = float(objective(candidate))
            n_evals += 1
            if not math.isfinite(f_prop):
                raise ObjectiveError("Objective returned a non-finite value")
        except ObjectiveError:
            status = StopReason.NON_FINITE
            break
        except GeometryError as e:
            logger.debug(f"Trust-region step rejected: {e}")
            delta /= 4.0
            continue

        rho_reg = max(1.0, abs(fx)) * np.spacing(1.0) * RHO_REGULARIZATION
        rho_num = fx - f_prop + rho_reg
        rho_den = -float(grad @ eta) - 0.5 * float(eta @ h_eta) + rho_reg
        model_decreased = rho_den >= 0
        rho = rho_num / rho_den if model_decreased else math.nan

        if not model_decreased or math.isnan(rho) or rho < SHRINK_THRESHOLD:
            delta /= 4.0
        elif rho > config.rho_expand and stop in (TcgStop.NEGATIVE_CURVATURE, TcgStop.EXCEEDED_TR):
            delta = min(2.0 * delta, config.delta_max)

        if model_decreased and rho > config.rho_accept and f_prop <= fx:
            n_evals += pull.n_evals
            x, fx = candidate, f_prop
            accepted.append(fx)
            pull = _Pullback(objective, x, constraint, config.fd_step)
            try:
                grad = pull.gradient()
            except ObjectiveError:
                status = StopReason.NON_FINITE
                break
            grad_norm = float(np.linalg.norm(grad))

        logger.debug(f"TR iter {k}: f={fx:.10g} |grad|={grad_norm:.3e} delta={delta:.3e} rho={rho:.3g} tcg={stop.value}")
        if delta < MIN_RADIUS_RATIO * config.delta_max:
            status = StopReason.SMALL_RADIUS
            break
    else:
        if grad_norm < config.grad_tol:
            status = StopReason.GRAD_TOL

    return TrustRegionResult(
        point=x,
        value=fx,
        iterations=iterations,
        grad_norm=grad_norm,
        n_evals=n_evals + pull.n_evals,
        status=status,
        accepted_values=tuple(accepted),
    )


def multi_start(
    objective: Objective,
    manifold: Manifold,
    n_starts: int,
    config: Optional[TrustRegionConfig] = None,
    *,
    rng: np.random.Generator,
    incumbent: Optional[ManifoldPoint] = None,
    constraint: Optional[ConstraintBox] = None,
    starts: Optional[Sequence[ManifoldPoint]] = None,
) -> TrustRegionResult:
    """
    Run tr_minimize from ``n_starts`` random points plus the incumbent and keep the best.

    ``starts`` replaces the random draws when given.

    Raises:
        ValueError: If n_starts < 1
        OptimizationError: If every start fails
    """
    if n_starts < 1:
        raise ValueError(f"Need at least one start, got {n_starts}")
    config = config or TrustRegionConfig.create(manifold)
    initial: List[ManifoldPoint] = list(starts) if starts is not None else random_points(rng, manifold, n_starts)
    if incumbent is not None:
        initial.append(incumbent)

    best: Optional[TrustRegionResult] = None
    failures = []
    for x0 in initial:
        try:
            result = tr_minimize(objective, manifold, x0, config, constraint)
        except (ObjectiveError, GeometryError, FloatingPointError, np.linalg.LinAlgError) as e:
            logger.warning(f"Optimizer start failed on {manifold.name}: {e}")
            failures.append(str(e))
            continue
        if best is None or result.value < best.value:
            best = result

    if best is None:
        raise OptimizationError(f"All {len(initial)} optimizer starts failed: {failures[0]}")
    return best
