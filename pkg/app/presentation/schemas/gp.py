"""
Pydantic schemas for Gaussian-process fitting.
Part of Presentation layer - request/response models.
"""
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from app.domain.entities.gp_model import GpBounds
from app.presentation.schemas.kernels import KernelSpecSchema, ManifoldSchema


class BoundsSchema(BaseModel):
    """Hyperparameter box; unset entries keep their defaults."""

    kappa: Tuple[float, float] = (0.01, 10.0)
    sigma2: Tuple[float, float] = (1e-6, 1e4)
    noise: Optional[Tuple[float, float]] = None

    def to_domain(self) -> GpBounds:
        return GpBounds.create(kappa=self.kappa, sigma2=self.sigma2, noise=self.noise)


class GpFitRequest(BaseModel):
    """Request schema for GP fitting."""

    kernel: KernelSpecSchema
    manifold: ManifoldSchema
    inputs: List[List[float]] = Field(..., min_length=1)
    targets: List[float] = Field(..., min_length=1)
    test_points: Optional[List[List[float]]] = None
    noise: Optional[float] = Field(None, ge=0)
    optimize_nu: bool = False
    restarts: Optional[int] = Field(None, ge=1)
    bounds: Optional[BoundsSchema] = None
    seed: int = 0

    @model_validator(mode="after")
    def check_lengths(self) -> "GpFitRequest":
        if len(self.inputs) != len(self.targets):
            raise ValueError(f"Got {len(self.inputs)} inputs and {len(self.targets)} targets")
        return self


class HyperparametersResponse(BaseModel):
    family: str
    nu: Optional[float]
    kappa: List[float]
    sigma2: float
    noise: float
    mean: float


class GpFitResponse(BaseModel):
    """Response schema for GP fitting."""

    manifold: str
    n: int
    hyperparameters: HyperparametersResponse
    log_marginal_likelihood: float
    jitter: float
    mean: Optional[List[float]] = None
    variance: Optional[List[float]] = None
