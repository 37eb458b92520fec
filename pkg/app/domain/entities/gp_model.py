"""
Gaussian-process entities.
Part of Domain layer - fitted model state and fitting configuration.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from app.core.config import settings
from app.domain.entities.kernel_spec import KernelSpec
from app.domain.entities.manifold_point import Manifold, ManifoldPoint

NU_GRID = (0.5, 1.5, 2.5, math.inf)


def _check_range(name: str, bounds: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0 < lo <= hi and math.isfinite(hi)):
        raise ValueError(f"Invalid {name} bounds: ({lo}, {hi})")
    return lo, hi


@dataclass(frozen=True)
class GpBounds:
    """Box for (kappa, sigma2, noise); every factor length scale shares the kappa box."""

    kappa: Tuple[float, float] = (0.01, 10.0)
    sigma2: Tuple[float, float] = (1e-6, 1e4)
    noise: Tuple[float, float] = (1e-6, 1.0)

    @classmethod
    def create(
        cls,
        kappa: Tuple[float, float] = (0.01, 10.0),
        sigma2: Tuple[float, float] = (1e-6, 1e4),
        noise: Optional[Tuple[float, float]] = None,
    ) -> "GpBounds":
        """
        Factory method to create fitting bounds.

        Raises:
            ValueError: If a box is empty or not positive
        """
        noise = noise if noise is not None else (settings.GP_NOISE_FLOOR, 1.0)
        return cls(
            kappa=_check_range("kappa", kappa),
            sigma2=_check_range("sigma2", sigma2),
            noise=_check_range("noise", noise),
        )


@dataclass(frozen=True)
class GpFitConfig:
    """
    Marginal-likelihood fitting settings.

    ``noise`` fixes the noise variance instead of fitting it; ``optimize_nu``
    also selects the smoothness from ``nu_grid``.
    """

    restarts: int = 5
    noise: Optional[float] = None
    optimize_nu: bool = False
    nu_grid: Tuple[float, ...] = NU_GRID
    analytic_gradient: bool = False
    jitter_min: float = 1e-10
    jitter_max: float = 1e-4

    @classmethod
    def create(
        cls,
        restarts: Optional[int] = None,
        noise: Optional[float] = None,
        optimize_nu: bool = False,
        nu_grid: Tuple[float, ...] = NU_GRID,
        analytic_gradient: bool = False,
    ) -> "GpFitConfig":
        """
        Factory method reading restart and jitter defaults from settings.

        Raises:
            ValueError: If restarts < 1, noise < 0 or the smoothness grid is invalid
        """
        restarts = restarts if restarts is not None else settings.GP_RESTARTS
        if restarts < 1:
            raise ValueError(f"Need at least one restart, got {restarts}")
        if noise is not None and noise < 0:
            raise ValueError(f"Noise variance must be >= 0, got {noise}")
        if optimize_nu and (len(nu_grid) == 0 or any(not nu > 0 for nu in nu_grid)):
            raise ValueError("Smoothness grid must be non-empty and positive")
        return cls(
            restarts=restarts,
            noise=noise,
            optimize_nu=optimize_nu,
            nu_grid=tuple(float(nu) for nu in nu_grid),
            analytic_gradient=analytic_gradient,
            jitter_min=settings.GP_JITTER_MIN,
            jitter_max=settings.GP_JITTER_MAX,
        )


@dataclass(frozen=True, eq=False)
class GpModel:
    """
    Conditioned Gaussian process.

    ``chol`` is the lower factor of K + (noise + jitter) I and ``alpha`` solves
    that system against targets - mean.
    """

    inputs: Tuple[ManifoldPoint, ...]
    targets: np.ndarray
    spec: KernelSpec
    manifold: Manifold
    noise: float
    mean: float
    jitter: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    lml: float = 0.0

    @classmethod
    def create(
        cls,
        inputs,
        targets,
        spec: KernelSpec,
        noise: float,
        mean: float,
        jitter: float,
        chol: np.ndarray,
        alpha: np.ndarray,
        lml: float,
    ) -> "GpModel":
        """
        Factory method to create a model from computed caches.

        Raises:
            ValueError: If inputs and targets differ in length or are empty
        """
        inputs = tuple(inputs)
        targets = np.array(targets, dtype=float).ravel()
        if len(inputs) == 0:
            raise ValueError("GP needs at least one observation")
        if len(inputs) != targets.size:
            raise ValueError(f"Got {len(inputs)} inputs and {targets.size} targets")
        for array in (targets, chol, alpha):
            array.setflags(write=False)
        return cls(
            inputs=inputs,
            targets=targets,
            spec=spec,
            manifold=inputs[0].manifold,
            noise=float(noise),
            mean=float(mean),
            jitter=float(jitter),
            chol=chol,
            alpha=alpha,
            lml=float(lml),
        )

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def hyperparameters(self) -> dict:
        return {
            "family": self.spec.family.value,
            "nu": self.spec.nu,
            "kappa": list(self.spec.kappas),
            "sigma2": self.spec.sigma2,
            "noise": self.noise,
            "mean": self.mean,
        }
