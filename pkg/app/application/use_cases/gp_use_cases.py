"""
Gaussian-process use cases.
Part of Application layer - fit a GP to externally supplied data.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from app.domain.entities.gp_model import GpBounds, GpFitConfig
from app.domain.entities.kernel_spec import KernelSpec
from app.domain.entities.manifold_point import Manifold
from app.domain.services.gaussian_process import fit, posterior_batch
from app.domain.services.kernels import check_supported
from app.infrastructure.services.serialization import decode_points, json_float

logger = logging.getLogger(__name__)


class FitGpUseCase:
    """
    Use case for fitting GP hyperparameters by maximum marginal likelihood.
    Optionally predicts at test points with the fitted model.
    """

    def execute(
        self,
        spec: KernelSpec,
        manifold: Manifold,
        inputs: Sequence[Sequence[float]],
        targets: Sequence[float],
        test_points: Optional[Sequence[Sequence[float]]] = None,
        noise: Optional[float] = None,
        optimize_nu: bool = False,
        restarts: Optional[int] = None,
        bounds: Optional[GpBounds] = None,
        seed: int = 0,
    ) -> dict:
        """
        Fit and predict.

        Args:
            spec: Initial kernel spec (family and, unless optimized, nu)
            manifold: Manifold of the coordinates
            inputs: Flat coordinates of the observed points
            targets: Observed values
            test_points: Optional flat coordinates to predict at
            noise: Fixed noise variance; fitted when None
            optimize_nu: Also choose nu from {0.5, 1.5, 2.5, inf}
            restarts: Optimizer starts
            bounds: Hyperparameter box
            seed: Seed of the random restarts

        Returns:
            Dict with hyperparameters, log marginal likelihood and predictions

        Raises:
            ValueError: If data or configuration are invalid
        """
        check_supported(spec, manifold)
        xs = decode_points(manifold, inputs)
        config = GpFitConfig.create(restarts=restarts, noise=noise, optimize_nu=optimize_nu)
        model = fit(xs, targets, spec, bounds or GpBounds.create(), config, np.random.default_rng(seed))

        hyperparameters = dict(model.hyperparameters)
        hyperparameters["nu"] = json_float(hyperparameters["nu"])
        result = {
            "manifold": manifold.name,
            "n": model.n,
            "hyperparameters": hyperparameters,
            "log_marginal_likelihood": model.lml,
            "jitter": model.jitter,
        }
        if test_points:
            means, variances = posterior_batch(model, decode_points(manifold, test_points))
            result["mean"] = means.tolist()
            result["variance"] = variances.tolist()

        logger.info(f"Fitted GP on {manifold.name} with {model.n} points, lml={model.lml:.4f}")
        return result
