"""
Kernel spec entities.
Part of Domain layer - immutable, hashable kernel configuration.
"""
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple, Union

from app.core.config import settings
from app.domain.exceptions import KernelConfigError


class KernelFamily(str, Enum):
    """Covariance families."""
    RIEMANNIAN_MATERN = "riemannian_matern"
    RIEMANNIAN_SE = "riemannian_se"
    EUCLIDEAN_MATERN = "euclidean_matern"
    EUCLIDEAN_SE = "euclidean_se"
    NAIVE_GEODESIC_SE = "naive_geodesic_se"
    PRODUCT = "product"
    CHOLESKY_EUCLIDEAN = "cholesky_euclidean"


SQUARED_EXPONENTIAL_FAMILIES = (
    KernelFamily.RIEMANNIAN_SE,
    KernelFamily.EUCLIDEAN_SE,
    KernelFamily.NAIVE_GEODESIC_SE,
)

QUADRATURE_METHODS = ("adaptive", "laguerre")


@dataclass(frozen=True)
class TruncationConfig:
    """
    Series truncation and quadrature settings.

    ``None`` bounds are chosen from the length scale at evaluation time.
    """

    torus_L: Optional[int] = None
    sphere_N: Optional[int] = None
    so3_L: Optional[int] = None
    min_terms: int = 30
    max_terms: int = 20000
    series_rel_tol: float = 1e-10
    matern_quad_nodes: int = 64
    matern_quadrature: str = "adaptive"
    line_quad_abs_tol: float = 1e-10
    line_quad_limit: int = 200

    @classmethod
    def create(
        cls,
        torus_L: Optional[int] = None,
        sphere_N: Optional[int] = None,
        so3_L: Optional[int] = None,
        min_terms: Optional[int] = None,
        max_terms: Optional[int] = None,
        series_rel_tol: Optional[float] = None,
        matern_quad_nodes: Optional[int] = None,
        matern_quadrature: Optional[str] = None,
        line_quad_abs_tol: Optional[float] = None,
        line_quad_limit: Optional[int] = None,
    ) -> "TruncationConfig":
        """
        Factory method filling unset values from settings.

        Raises:
            KernelConfigError: If a bound is < 1 or a tolerance is not positive
        """
        config = cls(
            torus_L=torus_L if torus_L is not None else settings.TORUS_L,
            sphere_N=sphere_N,
            so3_L=so3_L,
            min_terms=min_terms if min_terms is not None else max(settings.SPHERE_N, settings.SO3_L),
            max_terms=max_terms if max_terms is not None else settings.SERIES_MAX_TERMS,
            series_rel_tol=series_rel_tol if series_rel_tol is not None else settings.SERIES_REL_TOL,
            matern_quad_nodes=matern_quad_nodes if matern_quad_nodes is not None else settings.MATERN_QUAD_NODES,
            matern_quadrature=matern_quadrature or settings.MATERN_QUADRATURE,
            line_quad_abs_tol=line_quad_abs_tol if line_quad_abs_tol is not None else settings.LINE_QUAD_ABS_TOL,
            line_quad_limit=line_quad_limit if line_quad_limit is not None else settings.LINE_QUAD_LIMIT,
        )
        config.validate()
        return config

    def validate(self) -> None:
        for name in ("torus_L", "sphere_N", "so3_L"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise KernelConfigError(f"{name} must be >= 1, got {value}")
        if self.min_terms < 1 or self.max_terms < self.min_terms:
            raise KernelConfigError("Series term bounds must satisfy 1 <= min_terms <= max_terms")
        if self.matern_quad_nodes < 1 or self.line_quad_limit < 1:
            raise KernelConfigError("Quadrature node and subdivision counts must be >= 1")
        if self.series_rel_tol <= 0 or self.line_quad_abs_tol <= 0:
            raise KernelConfigError("Tolerances must be positive")
        if self.matern_quadrature not in QUADRATURE_METHODS:
            raise KernelConfigError(
                f"Invalid quadrature: {self.matern_quadrature}. Must be one of: {', '.join(QUADRATURE_METHODS)}"
            )


@dataclass(frozen=True)
class KernelSpec:
    """
    Kernel family with smoothness nu, length scale kappa and variance sigma2.

    Product specs hold one unit-variance spec per factor; their length
    scales are the factors' length scales.
    """

    family: KernelFamily
    nu: float
    kappa: float
    sigma2: float
    trunc: TruncationConfig
    factors: Tuple["KernelSpec", ...] = ()

    @classmethod
    def create(
        cls,
        family: Union[KernelFamily, str],
        nu: float = math.inf,
        kappa: float = 1.0,
        sigma2: float = 1.0,
        trunc: Optional[TruncationConfig] = None,
        factors: Tuple["KernelSpec", ...] = (),
    ) -> "KernelSpec":
        """
        Factory method to create a kernel spec.

        Squared-exponential families always carry nu = inf.

        Raises:
            KernelConfigError: If a hyperparameter is out of range
        """
        try:
            family = KernelFamily(family)
        except ValueError:
            raise KernelConfigError(
                f"Invalid kernel family: {family}. Must be one of: {', '.join(f.value for f in KernelFamily)}"
            )

        nu = float(nu)
        if family in SQUARED_EXPONENTIAL_FAMILIES:
            nu = math.inf
        if not nu > 0:
            raise KernelConfigError(f"Smoothness nu must be positive, got {nu}")
        if not (math.isfinite(sigma2) and sigma2 > 0):
            raise KernelConfigError(f"Variance must be positive, got {sigma2}")

        if family == KernelFamily.PRODUCT:
            if len(factors) < 1:
                raise KernelConfigError("Product kernel needs at least one factor")
            if any(f.family == KernelFamily.PRODUCT for f in factors):
                raise KernelConfigError("Nested product kernels are not supported")
            factors = tuple(replace(f, sigma2=1.0) for f in factors)
            kappa = 1.0
        else:
            if not (math.isfinite(kappa) and kappa > 0):
                raise KernelConfigError(f"Length scale kappa must be positive, got {kappa}")
            factors = ()

        return cls(
            family=family,
            nu=nu,
            kappa=float(kappa),
            sigma2=float(sigma2),
            trunc=trunc or TruncationConfig.create(),
            factors=factors,
        )

    @property
    def is_product(self) -> bool:
        return self.family == KernelFamily.PRODUCT

    @property
    def kappas(self) -> Tuple[float, ...]:
        """Length scales; one per factor for product kernels."""
        if self.is_product:
            return tuple(f.kappa for f in self.factors)
        return (self.kappa,)

    def with_kappa(self, kappas) -> "KernelSpec":
        """Copy with new length scale(s)."""
        kappas = tuple(float(k) for k in (kappas if hasattr(kappas, "__len__") else (kappas,)))
        if any(not (math.isfinite(k) and k > 0) for k in kappas):
            raise KernelConfigError(f"Length scales must be positive, got {kappas}")
        if self.is_product:
            if len(kappas) != len(self.factors):
                raise KernelConfigError(f"Product kernel needs {len(self.factors)} length scales")
            return replace(self, factors=tuple(replace(f, kappa=k) for f, k in zip(self.factors, kappas)))
        if len(kappas) != 1:
            raise KernelConfigError("Single kernel takes one length scale")
        return replace(self, kappa=kappas[0])

    def with_sigma2(self, sigma2: float) -> "KernelSpec":
        if not (math.isfinite(sigma2) and sigma2 > 0):
            raise KernelConfigError(f"Variance must be positive, got {sigma2}")
        return replace(self, sigma2=float(sigma2))

    def with_nu(self, nu: float) -> "KernelSpec":
        """Copy with a new smoothness; nu = inf turns Matérn families into their SE counterpart."""
        if not nu > 0:
            raise KernelConfigError(f"Smoothness nu must be positive, got {nu}")
        if self.is_product:
            return replace(self, nu=float(nu), factors=tuple(f.with_nu(nu) for f in self.factors))
        family = self.family
        if math.isinf(nu):
            family = {
                KernelFamily.RIEMANNIAN_MATERN: KernelFamily.RIEMANNIAN_SE,
                KernelFamily.EUCLIDEAN_MATERN: KernelFamily.EUCLIDEAN_SE,
            }.get(family, family)
        elif family in (KernelFamily.RIEMANNIAN_SE, KernelFamily.EUCLIDEAN_SE):
            family = {
                KernelFamily.RIEMANNIAN_SE: KernelFamily.RIEMANNIAN_MATERN,
                KernelFamily.EUCLIDEAN_SE: KernelFamily.EUCLIDEAN_MATERN,
            }[family]
        return replace(self, family=family, nu=float(nu))
