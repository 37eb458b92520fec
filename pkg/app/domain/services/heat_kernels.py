"""
Heat-kernel and Matérn profiles.
Part of Domain layer - vectorized, unnormalized kernel values as functions of
pairwise geometric invariants.

Compact spaces use truncated spectral sums. Hyperbolic space and SPD(2)
use closed forms or one-dimensional integrals, and their Matérn kernels
are integrals of the heat kernel over the length scale.
"""
import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad_vec
from scipy.special import gammaln, kve, roots_genlaguerre

from app.domain.exceptions import KernelConfigError, QuadratureError
from app.domain.services.spectral import so3_character, sphere_spectrum, torus_lattice_array

logger = logging.getLogger(__name__)

TORUS_TAIL_TOL = 1e-10
TORUS_LATTICE_BUDGET = 4096
TORUS_IMAGE_SWITCH = 0.3
TORUS_IMAGES = 4
HYPERBOLIC_SMALL_RHO = 1e-8
MILLSON_SMALL_RHO = 1e-3
GAUSS_CUTOFF = 50.0
SINH_TAIL_CUTOFF = 100.0
SPD_TAIL_CUTOFF = 60.0
ROW_CHUNK = 4_000_000


# ==================== Shared helpers ====================

def log_sinh(x: np.ndarray) -> np.ndarray:
    """log(sinh(x)) for x > 0 without overflow."""
    x = np.asarray(x, dtype=float)
    big = x > 20.0
    safe = np.where(big, 1.0, x)
    return np.where(big, x - math.log(2.0), np.log(np.sinh(safe)))


def _quad(fn: Callable[[float], np.ndarray], a: float, b: float, abs_tol: float, limit: int, what: str):
    """quad_vec with a convergence check."""
    result, error, info = quad_vec(
        fn, a, b, epsabs=abs_tol, epsrel=1e-10, norm="max", limit=limit, full_output=True
    )
    scale = max(1.0, float(np.max(np.abs(result)))) if np.size(result) else 1.0
    if not info.success and error > 1e3 * abs_tol * scale:
        raise QuadratureError(f"{what} integral did not converge (error estimate {error:.2e})")
    return result


def spectral_weights(lam: np.ndarray, nu: float, kappa: float, dim: int) -> np.ndarray:
    """
    Spectral weights relative to the lambda = 0 weight.

    exp(-kappa^2 lam / 2) for nu = inf, otherwise
    (1 + kappa^2 lam / (2 nu))^(-nu - dim/2).
    """
    if math.isinf(nu):
        return np.exp(-0.5 * kappa ** 2 * lam)
    return np.exp(-(nu + dim / 2.0) * np.log1p(kappa ** 2 * lam / (2.0 * nu)))


def matern_weight_scale(nu: float, kappa: float, dim: int) -> float:
    """(2 nu / kappa^2)^(-nu - dim/2), the lambda = 0 Matérn weight."""
    if math.isinf(nu):
        return 1.0
    return math.exp(-(nu + dim / 2.0) * math.log(2.0 * nu / kappa ** 2))


def series_length(diag_terms: np.ndarray, rel_tol: float, min_terms: int) -> int:
    """
    Number of series terms to keep.

    Stops at the first decreasing term whose diagonal contribution falls
    below ``rel_tol`` times the partial sum, never before ``min_terms``.
    """
    partial = np.cumsum(diag_terms)
    for n in range(min(min_terms, diag_terms.size), diag_terms.size):
        if diag_terms[n] < diag_terms[n - 1] and diag_terms[n] < rel_tol * partial[n]:
            return n
    return diag_terms.size


def auto_series_bound(kappa: float, nu: float, min_terms: int, max_terms: int) -> int:
    """Default degree bound for sphere and SO(3) series."""
    base = max(min_terms, math.ceil(9.0 / kappa))
    if not math.isinf(nu):
        base = math.ceil(base * (1.0 + 5.0 / nu))
    return int(min(base, max_terms))


# ==================== Torus ====================

def torus_auto_bound(kappa: float) -> int:
    """Lattice bound with Gaussian tail factor exp(-36)."""
    return int(max(3, math.ceil(6.0 / (math.pi * kappa * math.sqrt(2.0)))))


def torus_heat_profile(delta: np.ndarray, kappa: float, bound: int) -> np.ndarray:
    """
    Lattice sum over ||tau||_inf <= bound of exp(-2 kappa^2 pi^2 |tau|^2) cos(2 pi <tau, delta>).

    The box sum factorizes exactly into one theta series per coordinate.

    Args:
        delta: Coordinate differences, shape (..., d)
        kappa: Length scale
        bound: Lattice bound L
    """
    d = delta.shape[-1]
    tail = math.exp(-2.0 * kappa ** 2 * math.pi ** 2 * bound ** 2) * (2 * bound + 1) ** d
    if tail > TORUS_TAIL_TOL:
        logger.warning(f"Torus heat truncation tail {tail:.2e} at L={bound}, kappa={kappa}")

    t = np.arange(1, bound + 1, dtype=float)
    weights = np.exp(-2.0 * kappa ** 2 * math.pi ** 2 * t ** 2)
    flat = delta.reshape(-1)
    values = np.ones_like(flat)
    step = max(1, ROW_CHUNK // max(1, bound))
    for start in range(0, flat.size, step):
        chunk = flat[start:start + step]
        values[start:start + step] += 2.0 * np.cos(2.0 * math.pi * np.outer(chunk, t)) @ weights
    return np.prod(values.reshape(delta.shape), axis=-1)


def torus_coordinate_heat(delta: np.ndarray, ell: float) -> np.ndarray:
    """
    Untruncated per-coordinate theta series at length scale ``ell``.

    Spectral form for moderate ell, wrapped Gaussian images for small ell;
    both equal sum_t exp(-2 pi^2 ell^2 t^2) cos(2 pi t delta).
    """
    if ell > TORUS_IMAGE_SWITCH:
        bound = torus_auto_bound(ell)
        t = np.arange(1, bound + 1, dtype=float)
        weights = np.exp(-2.0 * ell ** 2 * math.pi ** 2 * t ** 2)
        return 1.0 + 2.0 * np.cos(2.0 * math.pi * delta[..., None] * t) @ weights
    images = np.arange(-TORUS_IMAGES, TORUS_IMAGES + 1, dtype=float)
    shifted = delta[..., None] + images
    gauss = np.exp(-0.5 * (shifted / ell) ** 2).sum(axis=-1)
    return gauss / (ell * math.sqrt(2.0 * math.pi))


def torus_matern_bound(nu: float, kappa: float, d: int) -> int:
    """Default lattice bound for the Matérn sum, capped by the lattice budget."""
    knee = max(1.0, math.sqrt(2.0 * nu) / (2.0 * math.pi * kappa))
    wanted = max(torus_auto_bound(kappa), math.ceil(knee * 10.0 ** (2.0 / nu)))
    cap = int((TORUS_LATTICE_BUDGET ** (1.0 / d) - 1.0) // 2)
    if wanted > cap:
        logger.debug(f"Torus Matérn lattice bound {wanted} capped at {cap} (d={d})")
    return int(max(1, min(wanted, cap)))


def torus_matern_profile(delta: np.ndarray, nu: float, kappa: float, bound: int) -> np.ndarray:
    """
    Sum over ||tau||_inf <= bound of (1 + 2 pi^2 kappa^2 |tau|^2 / nu)^(-nu - d/2) cos(2 pi <tau, delta>).

    Equals the Matérn lattice sum divided by its tau = 0 weight.
    """
    d = delta.shape[-1]
    lattice = torus_lattice_array(d, bound)
    lam = 4.0 * math.pi ** 2 * np.sum(lattice ** 2, axis=1)
    weights = spectral_weights(lam, nu, kappa, d)
    flat = delta.reshape(-1, d)
    values = np.empty(flat.shape[0])
    step = max(1, ROW_CHUNK // lattice.shape[0])
    for start in range(0, flat.shape[0], step):
        phase = 2.0 * math.pi * flat[start:start + step] @ lattice.T
        values[start:start + step] = np.cos(phase) @ weights
    return values.reshape(delta.shape[:-1])


# ==================== Sphere and SO(3) ====================

def zonal_series(cos_angle: np.ndarray, alpha: float, coeffs: np.ndarray) -> np.ndarray:
    """sum_n coeffs[n] C_n^(alpha)(cos_angle), streamed through the Gegenbauer recurrence."""
    t = np.clip(cos_angle, -1.0, 1.0)
    prev2 = np.ones_like(t)
    total = coeffs[0] * prev2
    if coeffs.size == 1:
        return total
    prev1 = 2.0 * alpha * t
    total = total + coeffs[1] * prev1
    for n in range(2, coeffs.size):
        current = (2.0 * t * (n + alpha - 1.0) * prev1 - (n + 2.0 * alpha - 2.0) * prev2) / n
        total += coeffs[n] * current
        prev2, prev1 = prev1, current
    return total


def sphere_coefficients(d: int, nu: float, kappa: float, bound: int, rel_tol: float, min_terms: int) -> np.ndarray:
    """Series coefficients c_{n,d} w(lambda_n), truncated by series_length."""
    lam, weight = sphere_spectrum(d, bound)
    coeffs = weight * spectral_weights(lam, nu, kappa, d)
    alpha = (d - 1.0) / 2.0
    diag = coeffs * np.exp(gammaln(np.arange(bound + 1) + 2.0 * alpha) - gammaln(np.arange(bound + 1) + 1.0) - gammaln(2.0 * alpha))
    keep = series_length(diag, rel_tol, min_terms)
    return coeffs[:keep]


def sphere_profile(cos_angle: np.ndarray, d: int, coeffs: np.ndarray) -> np.ndarray:
    """Zonal kernel on S^d from its Gegenbauer coefficients."""
    return zonal_series(cos_angle, (d - 1.0) / 2.0, coeffs)


def so3_coefficients(nu: float, kappa: float, bound: int, rel_tol: float, min_terms: int) -> np.ndarray:
    """Series coefficients w(l(l+1)) (2l + 1), truncated by series_length."""
    l = np.arange(bound + 1, dtype=float)
    coeffs = spectral_weights(l * (l + 1.0), nu, kappa, 3) * (2.0 * l + 1.0)
    keep = series_length(coeffs * (2.0 * l + 1.0), rel_tol, min_terms)
    return coeffs[:keep]


def so3_profile(theta: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """sum_l coeffs[l] chi_l(theta)."""
    theta = np.asarray(theta, dtype=float)
    total = np.zeros_like(theta)
    for l, c in enumerate(coeffs):
        total += c * so3_character(l, theta)
    return total


# ==================== Hyperbolic space ====================

def hyperbolic_heat3(rho: np.ndarray, ell: float) -> np.ndarray:
    """(rho / sinh rho) exp(-rho^2 / (2 ell^2)); equals 1 at rho = 0."""
    rho = np.asarray(rho, dtype=float)
    small = rho < HYPERBOLIC_SMALL_RHO
    safe = np.where(small, 1.0, rho)
    ratio = np.where(small, 1.0, safe / np.sinh(np.minimum(safe, 700.0)))
    ratio = np.where(rho > 700.0, 0.0, ratio)
    return ratio * np.exp(-0.5 * (rho / ell) ** 2)


def hyperbolic_heat5(rho: np.ndarray, ell: float) -> np.ndarray:
    """
    Millson step applied to the H^3 closed form.

    exp(-rho^2 / (2 ell^2)) [(rho cosh rho - sinh rho) / sinh^3 rho + rho^2 / (ell^2 sinh^2 rho)],
    with series values near rho = 0.
    """
    rho = np.asarray(rho, dtype=float)
    small = rho < MILLSON_SMALL_RHO
    r = np.where(small, 1.0, np.minimum(rho, 300.0))
    sinh = np.sinh(r)
    first = np.where(small, 1.0 / 3.0 - 2.0 * rho ** 2 / 15.0, (r * np.cosh(r) - sinh) / sinh ** 3)
    second = np.where(small, 1.0 - rho ** 2 / 3.0, (r / sinh) ** 2) / ell ** 2
    value = np.exp(-0.5 * (rho / ell) ** 2) * (first + second)
    return np.where(rho > 300.0, 0.0, value)


def _hyperbolic2_span(rho: np.ndarray, ell: float) -> np.ndarray:
    """Upper limit for t = sqrt(s - rho) in the H^2 integral."""
    gauss = -rho + np.sqrt(rho ** 2 + 2.0 * GAUSS_CUTOFF * ell ** 2)
    return np.sqrt(np.minimum(gauss, SINH_TAIL_CUTOFF))


def _hyperbolic2_log_base(t: np.ndarray, rho: np.ndarray, ell: float) -> np.ndarray:
    """log of 2t exp(-t^2 (2 rho + t^2) / (2 ell^2)) / sqrt(cosh(rho + t^2) - cosh(rho))."""
    t2 = t * t
    log_gap = math.log(2.0) + log_sinh(rho + 0.5 * t2) + log_sinh(0.5 * t2)
    return np.log(2.0 * t) - t2 * (2.0 * rho + t2) / (2.0 * ell ** 2) - 0.5 * log_gap


def hyperbolic_heat2_scaled(rho: np.ndarray, ell: float, abs_tol: float, limit: int) -> np.ndarray:
    """
    H^2 heat integral without the exp(-rho^2 / (2 ell^2)) factor.

    integral_rho^inf s exp(-s^2 / (2 ell^2)) / sqrt(cosh s - cosh rho) ds after s = rho + t^2.
    """
    rho = np.asarray(rho, dtype=float)
    span = _hyperbolic2_span(rho, ell)

    def integrand(tau):
        t = span * tau
        s = rho + t * t
        return span * s * np.exp(_hyperbolic2_log_base(t, rho, ell))

    return _quad(integrand, 0.0, 1.0, abs_tol, limit, "Hyperbolic H^2 heat")


def hyperbolic_heat4_scaled(rho: np.ndarray, ell: float, abs_tol: float, limit: int) -> np.ndarray:
    """
    Millson step on the H^2 integral, differentiated under the integral sign,
    without the exp(-rho^2 / (2 ell^2)) factor. rho is clamped below at 1e-3.
    """
    rho = np.maximum(np.asarray(rho, dtype=float), MILLSON_SMALL_RHO)
    span = _hyperbolic2_span(rho, ell)

    def integrand(tau):
        t = span * tau
        s = rho + t * t
        bracket = 0.5 * s / np.tanh(rho + 0.5 * t * t) - 1.0 + (s / ell) ** 2
        return span * bracket * np.exp(_hyperbolic2_log_base(t, rho, ell))

    return _quad(integrand, 0.0, 1.0, abs_tol, limit, "Hyperbolic H^4 heat") / np.sinh(rho)


def hyperbolic_heat(rho: np.ndarray, ell: float, d: int, abs_tol: float = 1e-10, limit: int = 200) -> np.ndarray:
    """
    Unnormalized heat kernel on H^d as a function of distance, d in {2, 3, 4, 5}.

    Raises:
        KernelConfigError: For unsupported dimensions
    """
    rho = np.asarray(rho, dtype=float)
    if d == 3:
        return hyperbolic_heat3(rho, ell)
    if d == 5:
        return hyperbolic_heat5(rho, ell)
    if d == 2:
        return np.exp(-0.5 * (rho / ell) ** 2) * hyperbolic_heat2_scaled(rho, ell, abs_tol, limit)
    if d == 4:
        clamped = np.maximum(rho, MILLSON_SMALL_RHO)
        return np.exp(-0.5 * (clamped / ell) ** 2) * hyperbolic_heat4_scaled(rho, ell, abs_tol, limit)
    raise KernelConfigError(f"Hyperbolic heat kernel supports d in {{2, 3, 4, 5}}, got {d}")


def hyperbolic_heat_normalized(rho: np.ndarray, ell: float, d: int, abs_tol: float = 1e-10, limit: int = 200) -> np.ndarray:
    """Heat kernel on H^d divided by its value at distance zero."""
    rho = np.asarray(rho, dtype=float)
    if d == 3:
        return hyperbolic_heat3(rho, ell)
    if d == 5:
        return hyperbolic_heat5(rho, ell) / hyperbolic_heat5(np.zeros(1), ell)[0]
    if d in (2, 4):
        flat = np.concatenate([np.zeros(1), rho.reshape(-1)])
        scaled = hyperbolic_heat2_scaled if d == 2 else hyperbolic_heat4_scaled
        values = scaled(flat, ell, abs_tol, limit)
        floor = 0.0 if d == 2 else MILLSON_SMALL_RHO
        gauss = np.exp(-0.5 * (np.maximum(rho.reshape(-1), floor) ** 2 - floor ** 2) / ell ** 2)
        return (gauss * values[1:] / values[0]).reshape(rho.shape)
    raise KernelConfigError(f"Hyperbolic heat kernel supports d in {{2, 3, 4, 5}}, got {d}")


# ==================== SPD(2) ====================

def spd2_heat_scaled(h: np.ndarray, ell: float, abs_tol: float, limit: int) -> np.ndarray:
    """
    SPD(2) heat integral without the exp(-(H1^2 + H2^2) / (2 ell^2)) factor.

    integral_0^inf (2s + a) exp(-s (s + a) / ell^2) / sqrt(sinh(s) sinh(s + a)) ds with a = H1 - H2,
    after s = t^2.

    Args:
        h: Log singular values, shape (..., 2), sorted descending
    """
    alpha = np.abs(h[..., 0] - h[..., 1]).reshape(-1)
    gauss = 0.5 * (-alpha + np.sqrt(alpha ** 2 + 4.0 * GAUSS_CUTOFF * ell ** 2))
    span = np.sqrt(np.minimum(gauss, SPD_TAIL_CUTOFF))

    def integrand(tau):
        t = span * tau
        s = t * t
        log_den = 0.5 * (log_sinh(s) + log_sinh(s + alpha))
        log_val = np.log(2.0 * t * (2.0 * s + alpha)) - s * (s + alpha) / ell ** 2 - log_den
        return span * np.exp(log_val)

    result = _quad(integrand, 0.0, 1.0, abs_tol, limit, "SPD(2) heat")
    return result.reshape(h.shape[:-1])


def spd2_heat(h: np.ndarray, ell: float, abs_tol: float = 1e-10, limit: int = 200) -> np.ndarray:
    """Unnormalized SPD(2) heat kernel from log singular values."""
    h = np.asarray(h, dtype=float)
    gauss = np.exp(-np.sum(h ** 2, axis=-1) / (2.0 * ell ** 2))
    return gauss * spd2_heat_scaled(h, ell, abs_tol, limit)


def spd2_heat_normalized(h: np.ndarray, ell: float, abs_tol: float = 1e-10, limit: int = 200) -> np.ndarray:
    """SPD(2) heat kernel divided by its value at H = 0."""
    h = np.asarray(h, dtype=float)
    flat = np.concatenate([np.zeros((1, 2)), h.reshape(-1, 2)])
    values = spd2_heat_scaled(flat, ell, abs_tol, limit)
    gauss = np.exp(-np.sum(flat[1:] ** 2, axis=-1) / (2.0 * ell ** 2))
    return (gauss * values[1:] / values[0]).reshape(h.shape[:-1])


# ==================== Matérn from heat ====================

def matern_from_heat(
    heat: Callable[[float], np.ndarray],
    nu: float,
    kappa: float,
    exponent: Optional[float] = None,
    method: str = "adaptive",
    nodes: int = 64,
    abs_tol: float = 1e-12,
    limit: int = 200,
) -> np.ndarray:
    """
    Matérn kernel as a length-scale mixture of heat kernels.

    integral_0^inf u^(p-1) exp(-(2 nu / kappa^2) u) heat(sqrt(2u)) du

    Args:
        heat: Maps a length scale to heat-kernel values for a fixed set of pairs
        nu: Finite smoothness
        kappa: Length scale
        exponent: p; nu for unit-variance heat kernels (default), nu + d/2
            for unnormalized heat kernels of a compact d-manifold
        method: "adaptive" (quad_vec) or "laguerre" (Gauss-Laguerre with ``nodes`` nodes)

    Returns:
        Unnormalized values; divide by the value at the diagonal.

    Raises:
        KernelConfigError: If nu is infinite or the method is unknown
        QuadratureError: If the adaptive integral does not converge
    """
    if not (math.isfinite(nu) and nu > 0):
        raise KernelConfigError(f"Matérn-from-heat needs finite positive nu, got {nu}")
    p = nu if exponent is None else float(exponent)
    rate = 2.0 * nu / kappa ** 2

    if method == "laguerre":
        x, w = roots_genlaguerre(nodes, p - 1.0)
        total = sum(wi * np.asarray(heat(math.sqrt(2.0 * xi / rate)), dtype=float) for xi, wi in zip(x, w))
        return total * rate ** (-p)

    if method != "adaptive":
        raise KernelConfigError(f"Unknown Matérn quadrature: {method}")

    # w = rate * u = s^(1/q) keeps the integrand bounded at s = 0
    q = min(nu, 1.0)

    def integrand(s):
        if s <= 0.0:
            s = 1e-300
        w = s ** (1.0 / q)
        weight = math.exp((p / q - 1.0) * math.log(s) - w) / q
        if weight == 0.0:
            return np.zeros_like(reference)
        return weight * np.asarray(heat(math.sqrt(2.0 * w / rate)), dtype=float)

    reference = np.asarray(heat(math.sqrt(2.0 / rate)), dtype=float)
    value = _quad(integrand, 0.0, math.inf, abs_tol, limit, "Matérn-from-heat")
    if not np.all(np.isfinite(value)):
        raise QuadratureError("Matérn-from-heat produced non-finite values")
    return value * rate ** (-p)


# ==================== Euclidean closed forms ====================

def euclidean_se(rho: np.ndarray, kappa: float) -> np.ndarray:
    """exp(-rho^2 / (2 kappa^2))."""
    return np.exp(-0.5 * (np.asarray(rho, dtype=float) / kappa) ** 2)


def euclidean_matern(rho: np.ndarray, nu: float, kappa: float) -> np.ndarray:
    """
    Unit-variance Euclidean Matérn kernel.

    Half-integer smoothness uses the polynomial-times-exponential forms,
    other values the modified Bessel function of the second kind.
    """
    rho = np.asarray(rho, dtype=float)
    if math.isinf(nu):
        return euclidean_se(rho, kappa)
    r = math.sqrt(2.0 * nu) * rho / kappa
    if nu == 0.5:
        return np.exp(-r)
    if nu == 1.5:
        return (1.0 + r) * np.exp(-r)
    if nu == 2.5:
        return (1.0 + r + r ** 2 / 3.0) * np.exp(-r)
    safe = np.where(r > 0, r, 1.0)
    log_val = (1.0 - nu) * math.log(2.0) - gammaln(nu) + nu * np.log(safe) - safe
    value = np.exp(log_val) * kve(nu, safe)
    return np.where(r > 0, value, 1.0)


def euclidean_heat_density(rho: np.ndarray, ell: float, d: int) -> np.ndarray:
    """Gaussian density (2 pi ell^2)^(-d/2) exp(-rho^2 / (2 ell^2)), the flat heat kernel."""
    rho = np.asarray(rho, dtype=float)
    return (2.0 * math.pi * ell ** 2) ** (-d / 2.0) * np.exp(-0.5 * (rho / ell) ** 2)
