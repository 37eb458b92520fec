"""
Core configuration for the Geobo server.
Loads settings from environment variables.
"""
from typing import Optional
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application
    APP_NAME: str = "Geobo"
    APP_VERSION: str = "1.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # API
    API_V1_PREFIX: str = "/api/v1"

    # Reproducibility
    MASTER_SEED: int = 20211108

    # Kernel truncation
    SPHERE_N: int = 30
    SO3_L: int = 30
    TORUS_L: Optional[int] = None  # None = chosen from the length scale
    SERIES_REL_TOL: float = 1e-10
    SERIES_MAX_TERMS: int = 20000
    MATERN_QUAD_NODES: int = 64
    MATERN_QUADRATURE: str = "adaptive"  # adaptive | laguerre
    LINE_QUAD_ABS_TOL: float = 1e-10
    LINE_QUAD_LIMIT: int = 200

    # Gaussian process fitting
    GP_RESTARTS: int = 5
    GP_JITTER_MIN: float = 1e-10
    GP_JITTER_MAX: float = 1e-4
    GP_NOISE_FLOOR: float = 1e-6

    # Trust-region optimizer
    TR_MAX_ITERS: int = 100
    TR_GRAD_TOL: float = 1e-6
    TR_FD_STEP: float = 1e-5

    # Bayesian optimization and benchmarks
    BO_N_INIT: int = 5
    BO_ACQ_STARTS: int = 8
    BENCH_SEEDS: int = 10
    BENCH_ITERS: int = 100
    BENCH_PAPER_SEEDS: int = 30
    BENCH_PAPER_ITERS: int = 200
    BENCH_JOBS: int = 1
    BENCH_OUT_DIR: str = "results"
    SPD_EIG_MIN: float = 0.001
    SPD_EIG_MAX: float = 5.0

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
