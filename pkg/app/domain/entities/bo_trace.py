"""
Bayesian-optimization entities.
Part of Domain layer - loop configuration and per-iteration trace.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from app.core.config import settings
from app.domain.entities.gp_model import GpBounds
from app.domain.entities.kernel_spec import KernelSpec
from app.domain.entities.manifold_point import ManifoldPoint
from app.domain.entities.trust_region import ConstraintBox


class Strategy(str, Enum):
    """Query selection strategy."""
    GP_EI = "gp_ei"
    RANDOM_SEARCH = "random_search"


class Phase(str, Enum):
    INIT = "init"
    BO = "bo"


@dataclass(frozen=True)
class BoConfig:
    """Settings of one BO run."""

    n_init: int
    n_iters: int
    acq_starts: int
    seed: int
    strategy: Strategy
    spec: Optional[KernelSpec] = None
    bounds: Optional[GpBounds] = None
    constraint: Optional[ConstraintBox] = None
    fit_restarts: int = 5

    @classmethod
    def create(
        cls,
        n_iters: int,
        spec: Optional[KernelSpec] = None,
        n_init: Optional[int] = None,
        acq_starts: Optional[int] = None,
        seed: int = 0,
        strategy: str = Strategy.GP_EI,
        bounds: Optional[GpBounds] = None,
        constraint: Optional[ConstraintBox] = None,
        fit_restarts: Optional[int] = None,
    ) -> "BoConfig":
        """
        Factory method to create a BO configuration.

        Raises:
            ValueError: If n_init < 1, n_iters < 0, acq_starts < 1, or the
                GP strategy has no kernel spec
        """
        try:
            strategy = Strategy(strategy)
        except ValueError:
            raise ValueError(
                f"Invalid strategy: {strategy}. Must be one of: {', '.join(s.value for s in Strategy)}"
            )
        n_init = n_init if n_init is not None else settings.BO_N_INIT
        acq_starts = acq_starts if acq_starts is not None else settings.BO_ACQ_STARTS
        fit_restarts = fit_restarts if fit_restarts is not None else settings.GP_RESTARTS
        if n_init < 1:
            raise ValueError(f"n_init must be >= 1, got {n_init}")
        if n_iters < 0:
            raise ValueError(f"n_iters must be >= 0, got {n_iters}")
        if acq_starts < 1 or fit_restarts < 1:
            raise ValueError("acq_starts and fit_restarts must be >= 1")
        if strategy == Strategy.GP_EI and spec is None:
            raise ValueError("GP strategy needs a kernel spec")
        return cls(
            n_init=n_init,
            n_iters=n_iters,
            acq_starts=acq_starts,
            seed=int(seed),
            strategy=strategy,
            spec=spec,
            bounds=bounds,
            constraint=constraint,
            fit_restarts=fit_restarts,
        )


@dataclass(frozen=True, eq=False)
class BoRecord:
    """One evaluated query."""

    iter: int
    phase: Phase
    point: ManifoldPoint
    y: float
    best_y: float
    regret: Optional[float] = None


@dataclass(frozen=True, eq=False)
class BoTrace:
    """
    Records of a run and its recommendation.

    The recommendation is the best observed query.
    """

    records: Tuple[BoRecord, ...]
    recommendation: Optional[ManifoldPoint]
    failures: int = 0
    aborted: bool = False

    @classmethod
    def create(cls, records: List[BoRecord], failures: int = 0, aborted: bool = False) -> "BoTrace":
        records = tuple(records)
        recommendation = None
        if records:
            recommendation = min(records, key=lambda r: (r.y, r.iter)).point
        return cls(records=records, recommendation=recommendation, failures=failures, aborted=aborted)

    @property
    def ys(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    @property
    def best_ys(self) -> np.ndarray:
        return np.array([r.best_y for r in self.records])

    @property
    def points(self) -> List[ManifoldPoint]:
        return [r.point for r in self.records]

    def __len__(self) -> int:
        return len(self.records)
