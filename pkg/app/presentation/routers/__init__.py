"""
Presentation layer routers.
"""
from app.presentation.routers import gp, health, kernels

__all__ = [
    "gp",
    "health",
    "kernels",
]
