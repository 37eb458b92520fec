"""
Spectral data service - special functions and Laplace-Beltrami spectra.
Part of Domain layer - inputs for the compact-manifold kernel series.
"""
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, List, Tuple

import numpy as np
from scipy.special import gammaln

GEGENBAUER_DOMAIN_TOL = 1e-12
CHARACTER_SMALL_ANGLE = 1e-6


@dataclass(frozen=True)
class SphereEigenLevel:
    """Eigenvalue level n of the Laplacian on S^d with its addition-theorem weight."""
    n: int
    lam: float
    weight: float
    multiplicity: int


@dataclass(frozen=True)
class So3Level:
    """Irreducible representation of SO(3) with highest weight l."""
    l: int
    lam: float
    dim: int


def gegenbauer_all(n_max: int, alpha: float, t) -> np.ndarray:
    """
    C_0^(alpha)(t), ..., C_{n_max}^(alpha)(t) by the three-term recurrence.

    Returns:
        Array of shape (n_max + 1, *t.shape)
    """
    t = np.asarray(t, dtype=float)
    values = np.empty((n_max + 1,) + t.shape)
    values[0] = 1.0
    if n_max >= 1:
        values[1] = 2.0 * alpha * t
    for n in range(2, n_max + 1):
        values[n] = (
            2.0 * t * (n + alpha - 1.0) * values[n - 1] - (n + 2.0 * alpha - 2.0) * values[n - 2]
        ) / n
    return values


def gegenbauer(n: int, alpha: float, t):
    """
    Gegenbauer polynomial C_n^(alpha)(t).

    Args:
        n: Degree, n >= 0
        alpha: Positive parameter
        t: Argument(s) in [-1, 1]

    Raises:
        ValueError: If n < 0, alpha <= 0 or |t| > 1
    """
    if n < 0:
        raise ValueError(f"Gegenbauer degree must be >= 0, got {n}")
    if alpha <= 0:
        raise ValueError(f"Gegenbauer parameter must be positive, got {alpha}")
    arr = np.asarray(t, dtype=float)
    if np.any(np.abs(arr) > 1.0 + GEGENBAUER_DOMAIN_TOL):
        raise ValueError("Gegenbauer argument must lie in [-1, 1]")
    result = gegenbauer_all(n, alpha, arr)[n]
    return float(result) if result.ndim == 0 else result


def gegenbauer_at_one(n, alpha: float):
    """C_n^(alpha)(1) = Gamma(n + 2 alpha) / (n! Gamma(2 alpha))."""
    n = np.asarray(n, dtype=float)
    return np.exp(gammaln(n + 2.0 * alpha) - gammaln(n + 1.0) - gammaln(2.0 * alpha))


def harmonic_count(d: int, n) -> np.ndarray:
    """Number of degree-n spherical harmonics on S^d."""
    n = np.asarray(n, dtype=float)
    log_count = np.log(2.0 * n + d - 1.0) + gammaln(n + d - 1.0) - gammaln(n + 1.0) - gammaln(d)
    return np.exp(log_count)


@lru_cache(maxsize=64)
def sphere_spectrum(d: int, n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues n(n+d-1) and weights c_{n,d} for n = 0..n_max as arrays."""
    n = np.arange(n_max + 1, dtype=float)
    lam = n * (n + d - 1.0)
    weight = harmonic_count(d, n) / gegenbauer_at_one(n, (d - 1.0) / 2.0)
    lam.setflags(write=False)
    weight.setflags(write=False)
    return lam, weight


def sphere_levels(d: int, n_max: int) -> List[SphereEigenLevel]:
    """
    Laplace-Beltrami levels of S^d up to degree ``n_max``.

    The weight c_{n,d} = N(d, n) / C_n^((d-1)/2)(1) turns the zonal
    Gegenbauer polynomial into the sum of products of degree-n harmonics,
    up to one global constant.

    Raises:
        ValueError: If d < 2 or n_max < 0
    """
    if d < 2:
        raise ValueError(f"Sphere dimension must be >= 2, got {d}")
    if n_max < 0:
        raise ValueError(f"Degree bound must be >= 0, got {n_max}")
    lam, weight = sphere_spectrum(d, n_max)
    counts = np.rint(harmonic_count(d, np.arange(n_max + 1))).astype(int)
    return [
        SphereEigenLevel(n=n, lam=float(lam[n]), weight=float(weight[n]), multiplicity=int(counts[n]))
        for n in range(n_max + 1)
    ]


def torus_lattice(d: int, bound: int) -> Iterator[Tuple[int, ...]]:
    """Every integer vector tau in Z^d with max-norm at most ``bound``, each once."""
    if bound < 0:
        raise ValueError(f"Lattice bound must be >= 0, got {bound}")
    return itertools.product(range(-bound, bound + 1), repeat=d)


@lru_cache(maxsize=32)
def torus_lattice_array(d: int, bound: int) -> np.ndarray:
    """torus_lattice as an integer array of shape ((2 bound + 1)^d, d)."""
    array = np.array(list(torus_lattice(d, bound)), dtype=float).reshape(-1, d)
    array.setflags(write=False)
    return array


def so3_character(l: int, theta):
    """
    Character of the spin-l representation at a rotation by ``theta``.

    sin((l + 1/2) theta) / sin(theta / 2), with the value 2l + 1 used
    below a small-angle cutoff.
    """
    theta = np.asarray(theta, dtype=float)
    half = np.sin(theta / 2.0)
    small = np.abs(theta) < CHARACTER_SMALL_ANGLE
    safe_half = np.where(small, 1.0, half)
    value = np.where(small, 2.0 * l + 1.0, np.sin((l + 0.5) * theta) / safe_half)
    return float(value) if value.ndim == 0 else value


def so3_levels(l_max: int) -> List[So3Level]:
    """
    SO(3) representations with highest weight 0..l_max.

    Eigenvalue l(l+1) and dimension 2l+1; other compact groups would
    enumerate their highest weights here.
    """
    if l_max < 0:
        raise ValueError(f"Highest-weight bound must be >= 0, got {l_max}")
    return [So3Level(l=l, lam=float(l * (l + 1)), dim=2 * l + 1) for l in range(l_max + 1)]
