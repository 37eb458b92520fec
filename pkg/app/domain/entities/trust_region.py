"""
Trust-region entities.
Part of Domain layer - solver configuration, results and the SPD eigenvalue box.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

from app.core.config import settings
from app.domain.entities.manifold_point import Manifold, ManifoldPoint


class StopReason(str, Enum):
    """Why a trust-region run ended."""
    GRAD_TOL = "grad_tol"
    MAX_ITERS = "max_iters"
    SMALL_RADIUS = "small_radius"
    NON_FINITE = "non_finite"


class TcgStop(str, Enum):
    """Why truncated CG ended."""
    NEGATIVE_CURVATURE = "negative_curvature"
    EXCEEDED_TR = "exceeded_trust_region"
    REACHED_TARGET_LINEAR = "reached_target_linear"
    REACHED_TARGET_SUPERLINEAR = "reached_target_superlinear"
    MAX_INNER_ITER = "max_inner_iter"
    MODEL_INCREASED = "model_increased"


@dataclass(frozen=True)
class ConstraintBox:
    """Eigenvalue bounds [lam_min, lam_max] for SPD search domains."""

    lam_min: float
    lam_max: float

    @classmethod
    def create(cls, lam_min: Optional[float] = None, lam_max: Optional[float] = None) -> "ConstraintBox":
        """
        Factory method; bounds default to SPD_EIG_MIN / SPD_EIG_MAX.

        Raises:
            ValueError: Unless 0 < lam_min < lam_max
        """
        lam_min = settings.SPD_EIG_MIN if lam_min is None else float(lam_min)
        lam_max = settings.SPD_EIG_MAX if lam_max is None else float(lam_max)
        if not 0 < lam_min < lam_max:
            raise ValueError(f"Invalid eigenvalue box: ({lam_min}, {lam_max})")
        return cls(lam_min=lam_min, lam_max=lam_max)


@dataclass(frozen=True)
class TrustRegionConfig:
    """Riemannian trust-region settings."""

    delta0: float
    delta_max: float
    rho_accept: float = 0.1
    rho_expand: float = 0.75
    max_iters: int = 100
    grad_tol: float = 1e-6
    tcg_max_iters: int = 10
    fd_step: float = 1e-5
    tcg_kappa: float = 0.1
    tcg_theta: float = 1.0

    @classmethod
    def create(
        cls,
        manifold: Manifold,
        delta0: Optional[float] = None,
        delta_max: Optional[float] = None,
        rho_accept: float = 0.1,
        rho_expand: float = 0.75,
        max_iters: Optional[int] = None,
        grad_tol: Optional[float] = None,
        tcg_max_iters: Optional[int] = None,
        fd_step: Optional[float] = None,
    ) -> "TrustRegionConfig":
        """
        Factory method with manifold-dependent radii.

        delta0 = 0.1 * diameter (or 0.1 without a diameter), delta_max =
        diameter (or max(1, sqrt(dim))), tcg_max_iters = 2 * dim.

        Raises:
            ValueError: If 0 < rho_accept < rho_expand < 1 or
                0 < delta0 <= delta_max fails
        """
        diameter = manifold.diameter
        dim = manifold.intrinsic_dim
        if delta_max is None:
            delta_max = diameter if diameter is not None else max(1.0, math.sqrt(dim))
        if delta0 is None:
            delta0 = 0.1 * (diameter if diameter is not None else 1.0)
            delta0 = min(delta0, delta_max)
        if not 0 < rho_accept < rho_expand < 1:
            raise ValueError(f"Need 0 < rho_accept < rho_expand < 1, got {rho_accept}, {rho_expand}")
        if not 0 < delta0 <= delta_max:
            raise ValueError(f"Need 0 < delta0 <= delta_max, got {delta0}, {delta_max}")

        config = cls(
            delta0=float(delta0),
            delta_max=float(delta_max),
            rho_accept=rho_accept,
            rho_expand=rho_expand,
            max_iters=max_iters if max_iters is not None else settings.TR_MAX_ITERS,
            grad_tol=grad_tol if grad_tol is not None else settings.TR_GRAD_TOL,
            tcg_max_iters=tcg_max_iters if tcg_max_iters is not None else 2 * dim,
            fd_step=fd_step if fd_step is not None else settings.TR_FD_STEP,
        )
        if config.max_iters < 1 or config.tcg_max_iters < 1 or config.grad_tol <= 0 or config.fd_step <= 0:
            raise ValueError("Iteration limits must be >= 1 and tolerances positive")
        return config


@dataclass(frozen=True)
class TrustRegionResult:
    """Best point of a run with diagnostics."""

    point: ManifoldPoint
    value: float
    iterations: int
    grad_norm: float
    n_evals: int
    status: StopReason
    accepted_values: Tuple[float, ...] = ()
