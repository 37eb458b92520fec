"""
Gaussian-process regression service.
Part of Domain layer - conditioning, evidence and hyperparameter fitting.

Hyperparameters are searched in log space: one log length scale per kernel
factor, then log sigma2, then log noise (unless the noise is fixed).
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import minimize

from app.domain.entities.gp_model import GpBounds, GpFitConfig, GpModel
from app.domain.entities.kernel_spec import KernelSpec
from app.domain.entities.manifold_point import ManifoldPoint
from app.domain.exceptions import CholeskyError, KernelConfigError, QuadratureError
from app.domain.services.kernels import cross_gram, gram

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
FAILED_FIT_VALUE = 1e25
KAPPA_FD_STEP = 1e-4


def jitter_ladder(jitter_min: float = 1e-10, jitter_max: float = 1e-4) -> List[float]:
    """0 followed by a geometric ladder from jitter_min to jitter_max by factors of 10."""
    steps = int(round(math.log10(jitter_max / jitter_min))) + 1
    return [0.0] + list(np.geomspace(jitter_min, jitter_max, steps))


def _factorize(matrix: np.ndarray, noise: float, jitter_min: float, jitter_max: float) -> Tuple[np.ndarray, float]:
    n = matrix.shape[0]
    for jitter in jitter_ladder(jitter_min, jitter_max):
        try:
            chol = linalg.cholesky(matrix + (noise + jitter) * np.eye(n), lower=True)
        except linalg.LinAlgError:
            continue
        if jitter > 0:
            logger.warning(f"Cholesky needed jitter {jitter:.1e} (n={n})")
        return chol, jitter
    raise CholeskyError(f"Cholesky failed up to jitter {jitter_max:.1e} (n={n})")


def _check_targets(inputs: Sequence[ManifoldPoint], targets) -> np.ndarray:
    targets = np.asarray(targets, dtype=float).ravel()
    if len(inputs) == 0:
        raise ValueError("GP needs at least one observation")
    if len(inputs) != targets.size:
        raise ValueError(f"Got {len(inputs)} inputs and {targets.size} targets")
    if not np.all(np.isfinite(targets)):
        raise ValueError("Targets must be finite")
    return targets


def condition(
    inputs: Sequence[ManifoldPoint],
    targets,
    spec: KernelSpec,
    noise: float,
    mean: Optional[float] = None,
    jitter_min: float = 1e-10,
    jitter_max: float = 1e-4,
) -> GpModel:
    """
    Condition a GP with fixed hyperparameters on observations.

    Args:
        inputs: Observed points
        targets: Observed values
        spec: Kernel spec
        noise: Observation noise variance
        mean: Constant prior mean; defaults to the empirical mean

    Raises:
        ValueError: If targets are non-finite or lengths differ
        CholeskyError: If the jitter ladder is exhausted
    """
    targets = _check_targets(inputs, targets)
    mean = float(np.mean(targets)) if mean is None else float(mean)
    matrix = gram(spec, inputs)
    chol, jitter = _factorize(matrix, noise, jitter_min, jitter_max)
    residual = targets - mean
    alpha = linalg.cho_solve((chol, True), residual)
    lml = -0.5 * float(residual @ alpha) - float(np.sum(np.log(np.diag(chol)))) - 0.5 * targets.size * LOG_2PI
    return GpModel.create(inputs, targets, spec, noise, mean, jitter, chol, alpha, lml)


def log_marginal_likelihood(model: GpModel) -> float:
    """-1/2 r^T K~^-1 r - 1/2 log det K~ - (n/2) log 2 pi from the cached factor."""
    residual = model.targets - model.mean
    return (
        -0.5 * float(residual @ model.alpha)
        - float(np.sum(np.log(np.diag(model.chol))))
        - 0.5 * model.n * LOG_2PI
    )


def lml_gradient(model: GpModel, include_noise: bool = True) -> np.ndarray:
    """
    Gradient of the evidence in [log kappa_j..., log sigma2, log noise].

    1/2 tr((alpha alpha^T - K~^-1) dK) per parameter; dK is exact for
    sigma2 and noise and a central difference in log kappa.
    """
    spec = model.spec
    inputs = model.inputs
    k_inv = linalg.cho_solve((model.chol, True), np.eye(model.n))
    outer = np.outer(model.alpha, model.alpha) - k_inv

    derivatives = []
    kappas = np.array(spec.kappas)
    for j in range(kappas.size):
        up, down = kappas.copy(), kappas.copy()
        up[j] *= math.exp(KAPPA_FD_STEP)
        down[j] *= math.exp(-KAPPA_FD_STEP)
        d_matrix = (gram(spec.with_kappa(up), inputs) - gram(spec.with_kappa(down), inputs)) / (2.0 * KAPPA_FD_STEP)
        derivatives.append(d_matrix)
    derivatives.append(gram(spec, inputs))
    if include_noise:
        derivatives.append(model.noise * np.eye(model.n))
    return np.array([0.5 * float(np.sum(outer * d)) for d in derivatives])


def _pack(spec: KernelSpec, noise: Optional[float]) -> np.ndarray:
    params = [math.log(k) for k in spec.kappas] + [math.log(spec.sigma2)]
    if noise is not None:
        params.append(math.log(noise))
    return np.array(params)


def _unpack(spec: KernelSpec, theta: np.ndarray, fixed_noise: Optional[float]) -> Tuple[KernelSpec, float]:
    n_kappa = len(spec.kappas)
    new_spec = spec.with_kappa(np.exp(theta[:n_kappa])).with_sigma2(math.exp(theta[n_kappa]))
    noise = fixed_noise if fixed_noise is not None else math.exp(theta[n_kappa + 1])
    return new_spec, noise


def _log_bounds(spec: KernelSpec, bounds: GpBounds, fit_noise: bool) -> List[Tuple[float, float]]:
    box = [(math.log(bounds.kappa[0]), math.log(bounds.kappa[1]))] * len(spec.kappas)
    box.append((math.log(bounds.sigma2[0]), math.log(bounds.sigma2[1])))
    if fit_noise:
        box.append((math.log(bounds.noise[0]), math.log(bounds.noise[1])))
    return box


def _fit_fixed_nu(
    inputs: Sequence[ManifoldPoint],
    targets: np.ndarray,
    spec: KernelSpec,
    bounds: GpBounds,
    config: GpFitConfig,
    rng: np.random.Generator,
    warm_start: Optional[Tuple[KernelSpec, float]],
) -> GpModel:
    mean = float(np.mean(targets))
    fit_noise = config.noise is None
    box = _log_bounds(spec, bounds, fit_noise)
    lower = np.array([b[0] for b in box])
    upper = np.array([b[1] for b in box])

    def objective(theta):
        try:
            candidate, noise = _unpack(spec, theta, config.noise)
            model = condition(inputs, targets, candidate, noise, mean, config.jitter_min, config.jitter_max)
        except (CholeskyError, KernelConfigError, QuadratureError):
            if config.analytic_gradient:
                return FAILED_FIT_VALUE, np.zeros_like(theta)
            return FAILED_FIT_VALUE
        if config.analytic_gradient:
            return -model.lml, -lml_gradient(model, include_noise=fit_noise)
        return -model.lml

    starts = []
    if warm_start is not None:
        warm_spec, warm_noise = warm_start
        starts.append(np.clip(_pack(warm_spec, warm_noise if fit_noise else None), lower, upper))
    else:
        starts.append(0.5 * (lower + upper))
    while len(starts) < config.restarts:
        starts.append(rng.uniform(lower, upper))

    best_theta, best_value = starts[0], math.inf
    for theta0 in starts:
        result = minimize(
            objective,
            theta0,
            method="L-BFGS-B",
            jac=True if config.analytic_gradient else "3-point",
            bounds=box,
        )
        value = float(result.fun)
        if math.isfinite(value) and value < best_value:
            best_theta, best_value = np.clip(result.x, lower, upper), value

    fitted_spec, noise = _unpack(spec, best_theta, config.noise)
    return condition(inputs, targets, fitted_spec, noise, mean, config.jitter_min, config.jitter_max)


def fit(
    inputs: Sequence[ManifoldPoint],
    targets,
    spec: KernelSpec,
    bounds: Optional[GpBounds] = None,
    config: Optional[GpFitConfig] = None,
    rng: Optional[np.random.Generator] = None,
    warm_start: Optional[Tuple[KernelSpec, float]] = None,
) -> GpModel:
    """
    Fit kernel hyperparameters by maximizing the log marginal likelihood.

    Multi-start L-BFGS-B over log-parameters clamped to ``bounds``; the
    first start is ``warm_start`` (spec, noise) or the center of the box.
    The prior mean is the empirical mean of the targets.

    Raises:
        ValueError: If targets are non-finite or lengths differ
        CholeskyError: If the final model cannot be factorized
    """
    targets = _check_targets(inputs, targets)
    bounds = bounds or GpBounds.create()
    config = config or GpFitConfig.create()
    rng = rng if rng is not None else np.random.default_rng(0)

    if not config.optimize_nu:
        model = _fit_fixed_nu(inputs, targets, spec, bounds, config, rng, warm_start)
    else:
        candidates = [
            _fit_fixed_nu(inputs, targets, spec.with_nu(nu), bounds, config, rng, warm_start)
            for nu in config.nu_grid
        ]
        model = max(candidates, key=lambda m: m.lml)

    logger.info(
        f"GP fit n={model.n} nu={model.spec.nu} kappa={[round(k, 4) for k in model.spec.kappas]} "
        f"sigma2={model.spec.sigma2:.4g} noise={model.noise:.3g} lml={model.lml:.4f}"
    )
    return model


def posterior_batch(model: GpModel, points: Sequence[ManifoldPoint]) -> Tuple[np.ndarray, np.ndarray]:
    """Predictive means and variances at several points."""
    k_star = cross_gram(model.spec, list(model.inputs), list(points))
    means = model.mean + k_star.T @ model.alpha
    v = linalg.solve_triangular(model.chol, k_star, lower=True)
    variances = model.spec.sigma2 - np.sum(v * v, axis=0)
    return means, np.clip(variances, 0.0, model.spec.sigma2)


def posterior(model: GpModel, x: ManifoldPoint) -> Tuple[float, float]:
    """
    Predictive mean and variance of f(x).

    The variance is clamped into [0, sigma2].
    """
    means, variances = posterior_batch(model, [x])
    return float(means[0]), float(variances[0])
