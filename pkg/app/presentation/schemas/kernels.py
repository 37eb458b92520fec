"""
Pydantic schemas for manifolds, kernel specs and Gram requests.
Part of Presentation layer - request/response models.
"""
import math
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field

from app.core.config import settings
from app.domain.entities.kernel_spec import KernelFamily, KernelSpec, TruncationConfig
from app.domain.entities.manifold_point import Manifold, ManifoldKind


class ManifoldSchema(BaseModel):
    """Manifold descriptor; ``dim`` is ignored for products."""

    kind: ManifoldKind
    dim: int = Field(1, ge=1)
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    eig_bounds: Optional[Tuple[float, float]] = None
    scale: float = Field(1.0, gt=0)
    factors: Optional[List["ManifoldSchema"]] = None

    def to_domain(self) -> Manifold:
        """
        Build the domain descriptor.

        Raises:
            ValueError: If the descriptor is invalid
        """
        if self.kind == ManifoldKind.PRODUCT:
            return Manifold.create(
                ManifoldKind.PRODUCT, len(self.factors or []), factors=tuple(f.to_domain() for f in self.factors or [])
            )
        eig_bounds = self.eig_bounds or (settings.SPD_EIG_MIN, settings.SPD_EIG_MAX)
        return Manifold.create(
            self.kind,
            self.dim,
            lower=tuple(self.lower) if self.lower is not None else None,
            upper=tuple(self.upper) if self.upper is not None else None,
            eig_bounds=tuple(eig_bounds),
            scale=self.scale,
        )


class TruncationSchema(BaseModel):
    """Optional truncation overrides; unset values come from settings."""

    torus_L: Optional[int] = Field(None, ge=1)
    sphere_N: Optional[int] = Field(None, ge=1)
    so3_L: Optional[int] = Field(None, ge=1)
    matern_quadrature: Optional[str] = None
    matern_quad_nodes: Optional[int] = Field(None, ge=1)

    def to_domain(self) -> TruncationConfig:
        return TruncationConfig.create(
            torus_L=self.torus_L,
            sphere_N=self.sphere_N,
            so3_L=self.so3_L,
            matern_quadrature=self.matern_quadrature,
            matern_quad_nodes=self.matern_quad_nodes,
        )


class KernelSpecSchema(BaseModel):
    """Kernel spec; ``nu`` null means infinite smoothness."""

    family: KernelFamily
    nu: Optional[float] = Field(None, gt=0)
    kappa: float = Field(1.0, gt=0)
    sigma2: float = Field(1.0, gt=0)
    factors: Optional[List["KernelSpecSchema"]] = None
    truncation: Optional[TruncationSchema] = None

    def to_domain(self) -> KernelSpec:
        """
        Build the domain spec.

        Raises:
            ValueError: If a hyperparameter is invalid
        """
        trunc = self.truncation.to_domain() if self.truncation else None
        nu = math.inf if self.nu is None else self.nu
        factors = tuple(f.to_domain() for f in self.factors or [])
        return KernelSpec.create(self.family, nu=nu, kappa=self.kappa, sigma2=self.sigma2, trunc=trunc, factors=factors)


class GramRequest(BaseModel):
    """Request schema for Gram matrix evaluation."""

    kernel: KernelSpecSchema
    manifold: ManifoldSchema
    points: List[List[float]] = Field(..., min_length=1)
    others: Optional[List[List[float]]] = None


class GramResponse(BaseModel):
    """Response schema for Gram matrix evaluation."""

    manifold: str
    family: str
    nu: Optional[float]
    kappa: List[float]
    matrix: List[List[float]]
    min_eigenvalue: Optional[float] = None


ManifoldSchema.model_rebuild()
KernelSpecSchema.model_rebuild()
