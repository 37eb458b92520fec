"""
Pydantic schemas for benchmark suite configuration files.
Part of Presentation layer - suite JSON validation.

Example:
    {
      "master_seed": 20211108,
      "seeds": 10, "iters": 100,
      "kernels": [
        {"name": "matern", "family": "riemannian_matern", "nu": 2.5},
        {"name": "euclid", "family": "euclidean_matern", "nu": 2.5, "domain": "euclidean"},
        {"name": "random", "strategy": "random_search"}
      ],
      "benchmarks": [
        {"function": "ackley", "manifolds": [{"kind": "sphere", "dim": 2}, {"kind": "torus", "dim": 2}]}
      ]
    }
"""
import math
import re
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.application.use_cases.bench_use_cases import KernelPlan, SuitePlan
from app.core.config import settings
from app.domain.entities.benchmark_spec import TEST_FUNCTIONS, BenchmarkSpec
from app.domain.entities.bo_trace import Strategy
from app.domain.entities.kernel_spec import KernelFamily
from app.domain.services.benchmarks import DomainKind
from app.infrastructure.services.serialization import decode_point
from app.presentation.schemas.kernels import ManifoldSchema

_LABEL = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")


class ManifoldEntry(ManifoldSchema):
    """Benchmark manifold with optional base point and radius (non-compact spaces)."""

    radius: Optional[float] = Field(None, gt=0)
    base: Optional[List[float]] = None


class KernelEntry(BaseModel):
    """
    One strategy of the suite.

    ``nu`` null means infinite smoothness. ``manifolds`` restricts the entry
    to the listed manifold names (such as "SPD2").
    """

    name: str
    strategy: Strategy = Strategy.GP_EI
    family: Optional[KernelFamily] = None
    nu: Optional[float] = Field(2.5, gt=0)
    domain: DomainKind = DomainKind.NATIVE
    manifolds: Optional[List[str]] = Field(None, min_length=1)

    @field_validator("name")
    @classmethod
    def check_name(cls, value: str) -> str:
        if not _LABEL.match(value) or "__" in value:
            raise ValueError(f"Kernel name {value!r} must be alphanumeric with _ . - and no double underscore")
        return value

    @model_validator(mode="after")
    def check_family(self) -> "KernelEntry":
        if self.strategy == Strategy.GP_EI and self.family is None and self.domain != DomainKind.EIGEN:
            raise ValueError(f"Kernel {self.name} needs a family")
        return self

    def to_plan(self) -> KernelPlan:
        return KernelPlan(
            name=self.name,
            strategy=self.strategy,
            family=self.family.value if self.family else None,
            nu=math.inf if self.nu is None else self.nu,
            domain=self.domain,
            manifolds=tuple(self.manifolds) if self.manifolds is not None else None,
        )


class BenchmarkEntry(BaseModel):
    """Test function and the manifolds it is projected onto."""

    function: str
    manifolds: List[ManifoldEntry] = Field(..., min_length=1)
    seeds: Optional[int] = Field(None, ge=1)
    iters: Optional[int] = Field(None, ge=0)

    @field_validator("function")
    @classmethod
    def check_function(cls, value: str) -> str:
        if value not in TEST_FUNCTIONS:
            raise ValueError(f"Invalid test function: {value}. Must be one of: {', '.join(TEST_FUNCTIONS)}")
        return value


class SuiteConfig(BaseModel):
    """Benchmark suite file."""

    master_seed: int = Field(default_factory=lambda: settings.MASTER_SEED)
    seeds: Optional[int] = Field(None, ge=1)
    iters: Optional[int] = Field(None, ge=0)
    n_init: Optional[int] = Field(None, ge=1)
    acq_starts: Optional[int] = Field(None, ge=1)
    regret_threshold: float = -2.0
    kernels: List[KernelEntry] = Field(..., min_length=1)
    benchmarks: List[BenchmarkEntry] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_unique_kernels(self) -> "SuiteConfig":
        names = [k.name for k in self.kernels]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"Duplicate kernel names: {', '.join(duplicates)}")
        return self

    def to_plan(self, seeds: Optional[int] = None, iters: Optional[int] = None) -> SuitePlan:
        """
        Resolve the suite; explicit ``seeds``/``iters`` override the file.

        Raises:
            ValueError: If a manifold, base point or function/dimension pair is invalid
        """
        benchmarks = []
        for entry in self.benchmarks:
            for manifold_entry in entry.manifolds:
                manifold = manifold_entry.to_domain()
                base = decode_point(manifold, manifold_entry.base) if manifold_entry.base is not None else None
                benchmarks.append(
                    BenchmarkSpec.create(
                        entry.function,
                        manifold,
                        base=base,
                        radius=manifold_entry.radius,
                        seeds=_first(seeds, entry.seeds, self.seeds, settings.BENCH_SEEDS),
                        iters=_first(iters, entry.iters, self.iters, settings.BENCH_ITERS),
                    )
                )
        return SuitePlan(
            benchmarks=tuple(benchmarks),
            kernels=tuple(k.to_plan() for k in self.kernels),
            master_seed=self.master_seed,
            n_init=_first(self.n_init, settings.BO_N_INIT),
            acq_starts=_first(self.acq_starts, settings.BO_ACQ_STARTS),
            regret_threshold=self.regret_threshold,
        )


def _first(*values):
    return next(v for v in values if v is not None)
