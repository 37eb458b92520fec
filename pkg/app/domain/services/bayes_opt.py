"""
Bayesian-optimization service.
Part of Domain layer - expected improvement and the BO loop (minimization).
"""
import logging
import math
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from app.domain.entities.bo_trace import BoConfig, BoRecord, BoTrace, Phase, Strategy
from app.domain.entities.gp_model import GpBounds, GpFitConfig, GpModel
from app.domain.entities.manifold_point import Manifold, ManifoldPoint
from app.domain.entities.trust_region import TrustRegionConfig
from app.domain.exceptions import CholeskyError, ObjectiveError, OptimizationError, QuadratureError
from app.domain.services.gaussian_process import fit, posterior_batch
from app.domain.services.manifolds import random_points
from app.domain.services.trust_region import apply_constraint, multi_start

logger = logging.getLogger(__name__)

ZERO_STD = 1e-12


def ei_from_moments(mean: np.ndarray, variance: np.ndarray, best_y: float) -> np.ndarray:
    """
    s (z Phi(z) + phi(z)) with z = (best_y - mean) / s.

    Points with s < 1e-12 get max(best_y - mean, 0).
    """
    mean = np.asarray(mean, dtype=float)
    std = np.sqrt(np.clip(np.asarray(variance, dtype=float), 0.0, None))
    improvement = best_y - mean
    safe = np.where(std < ZERO_STD, 1.0, std)
    z = improvement / safe
    ei = safe * (z * norm.cdf(z) + norm.pdf(z))
    return np.where(std < ZERO_STD, np.maximum(improvement, 0.0), np.maximum(ei, 0.0))


def expected_improvement(model: GpModel, x: ManifoldPoint, best_y: float) -> float:
    """Expected improvement over ``best_y`` at x under the model's posterior."""
    mean, variance = posterior_batch(model, [x])
    return float(ei_from_moments(mean, variance, best_y)[0])


class NegativeExpectedImprovement:
    """-EI as a trust-region objective, with a batched form for finite-difference stencils."""

    def __init__(self, model: GpModel, best_y: float):
        self.model = model
        self.best_y = best_y

    def __call__(self, point: ManifoldPoint) -> float:
        return -expected_improvement(self.model, point, self.best_y)

    def batch(self, points: Sequence[ManifoldPoint]) -> np.ndarray:
        mean, variance = posterior_batch(self.model, points)
        return -ei_from_moments(mean, variance, self.best_y)


def simple_regret(trace: Union[BoTrace, Sequence[float]], f_star: float) -> np.ndarray:
    """Running minimum of the observations minus f_star."""
    ys = trace.ys if isinstance(trace, BoTrace) else np.asarray(trace, dtype=float)
    if ys.size == 0:
        return ys
    return np.minimum.accumulate(ys) - f_star


def _evaluate(objective: Callable[[ManifoldPoint], float], point: ManifoldPoint) -> float:
    try:
        value = float(objective(point))
    except ObjectiveError:
        raise
    except Exception as e:
        raise ObjectiveError(f"Objective raised {type(e).__name__}: {e}")
    if not math.isfinite(value):
        raise ObjectiveError(f"Objective returned {value}")
    return value


class _Loop:
    """Mutable state of one run."""

    def __init__(self, objective, manifold: Manifold, config: BoConfig, f_star, rng):
        self.objective = objective
        self.manifold = manifold
        self.config = config
        self.f_star = f_star
        self.rng = rng
        self.records: List[BoRecord] = []
        self.failures = 0
        self.warm_start = None

    def random_query(self) -> ManifoldPoint:
        return apply_constraint(random_points(self.rng, self.manifold, 1)[0], self.config.constraint)

    @property
    def best(self) -> Optional[BoRecord]:
        return min(self.records, key=lambda r: (r.y, r.iter)) if self.records else None

    def record(self, phase: Phase, point: ManifoldPoint, y: float) -> None:
        best_y = min(y, self.best.best_y) if self.records else y
        regret = best_y - self.f_star if self.f_star is not None else None
        self.records.append(BoRecord(len(self.records), phase, point, y, best_y, regret))

    def evaluate_with_retry(self, phase: Phase, query: ManifoldPoint) -> bool:
        """Evaluate ``query``; retry once with a random point. False means abort."""
        for attempt in range(2):
            try:
                y = _evaluate(self.objective, query)
            except ObjectiveError as e:
                self.failures += 1
                logger.warning(f"Objective failed on {self.manifold.name} (attempt {attempt + 1}): {e}")
                query = self.random_query()
                continue
            self.record(phase, query, y)
            return True
        return False

    def propose(self) -> ManifoldPoint:
        config = self.config
        if config.strategy == Strategy.RANDOM_SEARCH:
            return self.random_query()

        inputs = [r.point for r in self.records]
        targets = [r.y for r in self.records]
        fit_config = GpFitConfig.create(restarts=config.fit_restarts)
        try:
            model = fit(
                inputs,
                targets,
                config.spec,
                config.bounds or GpBounds.create(),
                fit_config,
                rng=self.rng,
                warm_start=self.warm_start,
            )
        except (CholeskyError, QuadratureError) as e:
            logger.warning(f"GP fit failed, using a random query: {e}")
            return self.random_query()
        self.warm_start = (model.spec, model.noise)

        best = self.best
        starts = [self.random_query() for _ in range(config.acq_starts)]
        tr_config = TrustRegionConfig.create(self.manifold)
        try:
            result = multi_start(
                NegativeExpectedImprovement(model, best.best_y),
                self.manifold,
                config.acq_starts,
                tr_config,
                rng=self.rng,
                incumbent=best.point,
                constraint=config.constraint,
                starts=starts,
            )
        except OptimizationError as e:
            logger.warning(f"Acquisition search failed, using a random query: {e}")
            return self.random_query()
        return result.point


def bo_run(
    objective: Callable[[ManifoldPoint], float],
    manifold: Manifold,
    config: BoConfig,
    f_star: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
) -> BoTrace:
    """
    Minimize ``objective`` by Bayesian optimization.

    n_init random evaluations, then n_iters rounds of GP fit, EI
    maximization and evaluation. A failed evaluation is retried once at a
    fresh random point; two consecutive failures end the run early.

    Args:
        objective: Function to minimize
        manifold: Search space
        config: Loop settings
        f_star: Known or estimated minimum for regret bookkeeping
        rng: Random generator; defaults to one seeded with config.seed
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    loop = _Loop(objective, manifold, config, f_star, rng)

    for _ in range(config.n_init):
        if not loop.evaluate_with_retry(Phase.INIT, loop.random_query()):
            logger.error(f"BO on {manifold.name} aborted during initialization")
            return BoTrace.create(loop.records, loop.failures, aborted=True)

    for t in range(config.n_iters):
        query = loop.propose()
        if not loop.evaluate_with_retry(Phase.BO, query):
            logger.error(f"BO on {manifold.name} aborted at iteration {t}")
            return BoTrace.create(loop.records, loop.failures, aborted=True)
        last = loop.records[-1]
        logger.info(f"BO {manifold.name} iter {t + 1}/{config.n_iters}: y={last.y:.6g} best={last.best_y:.6g}")

    return BoTrace.create(loop.records, loop.failures)
