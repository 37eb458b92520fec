"""
Kernel service - covariance functions on manifolds.
Part of Domain layer - dispatch from (family, manifold) to a kernel profile.

Every kernel is evaluated in two steps: pairwise geometric features
(distances, wrapped differences, log spectra) and a profile mapping
features to unnormalized values. Normalizing by the profile at the
diagonal gives k(x, x) = sigma2.
"""
import logging
import math
from functools import lru_cache
from typing import Callable, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from app.domain.entities.kernel_spec import KernelFamily, KernelSpec
from app.domain.entities.manifold_point import Manifold, ManifoldKind, ManifoldPoint
from app.domain.exceptions import KernelConfigError, ManifoldMismatchError
from app.domain.services import heat_kernels as hk
from app.domain.services.manifolds import (
    ambient_coordinates,
    factor_stack,
    pairwise_distances,
    stack,
    sym_function,
    wrap_unit,
)

logger = logging.getLogger(__name__)

Features = Union[np.ndarray, Tuple[np.ndarray, ...]]

HYPERBOLIC_DIMS = (2, 3, 4, 5)

EUCLIDEAN_FAMILIES = (KernelFamily.EUCLIDEAN_MATERN, KernelFamily.EUCLIDEAN_SE)
RIEMANNIAN_FAMILIES = (KernelFamily.RIEMANNIAN_MATERN, KernelFamily.RIEMANNIAN_SE)


# ==================== Support checks ====================

def check_supported(spec: KernelSpec, manifold: Manifold) -> None:
    """
    Raise KernelConfigError unless the family is defined on the manifold.
    """
    if spec.is_product:
        if manifold.kind != ManifoldKind.PRODUCT:
            raise KernelConfigError(f"Product kernel needs a product manifold, got {manifold.name}")
        if len(spec.factors) != len(manifold.factors):
            raise KernelConfigError(
                f"Product kernel has {len(spec.factors)} factors, {manifold.name} has {len(manifold.factors)}"
            )
        for factor_spec, factor in zip(spec.factors, manifold.factors):
            check_supported(factor_spec, factor)
        return

    family = spec.family
    kind = manifold.kind
    if family in EUCLIDEAN_FAMILIES or family == KernelFamily.NAIVE_GEODESIC_SE:
        return
    if family == KernelFamily.CHOLESKY_EUCLIDEAN:
        if (kind == ManifoldKind.SPD and manifold.dim == 2) or (kind == ManifoldKind.EUCLIDEAN and manifold.dim == 3):
            return
        raise KernelConfigError(f"Cholesky kernel needs SPD2 or R3, got {manifold.name}")

    if kind == ManifoldKind.PRODUCT:
        raise KernelConfigError(f"Use a product kernel on {manifold.name}")
    if kind == ManifoldKind.ROTATION and manifold.dim != 3:
        raise KernelConfigError(f"Riemannian kernels on rotation groups support SO3 only, got {manifold.name}")
    if kind == ManifoldKind.SPD and manifold.dim != 2:
        raise KernelConfigError(f"Riemannian kernels on SPD matrices support SPD2 only, got {manifold.name}")
    if kind == ManifoldKind.HYPERBOLIC and manifold.dim not in HYPERBOLIC_DIMS:
        raise KernelConfigError(f"Riemannian kernels on hyperbolic space support d in 2..5, got {manifold.name}")


# ==================== Features ====================

def spd_log_spectrum(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Half log-eigenvalues of x^-1/2 y x^-1/2 for all pairs, sorted descending.

    These are the log singular values of X_C Y_C^-1 up to a common sign,
    which the SPD(2) kernel does not see.

    Returns:
        Array of shape (n, m, d)
    """
    inv_sqrt = sym_function(x, lambda w: 1.0 / np.sqrt(w))
    whitened = np.einsum("iab,jbc,icd->ijad", inv_sqrt, y, inv_sqrt)
    whitened = 0.5 * (whitened + np.swapaxes(whitened, -1, -2))
    logs = 0.5 * np.log(np.linalg.eigvalsh(whitened))
    return logs[..., ::-1]


def cholesky_vectors(points: Sequence[ManifoldPoint]) -> np.ndarray:
    """Lower Cholesky factors as (L11, L21, L22) rows; R3 points pass through."""
    manifold = points[0].manifold
    data = stack(points)
    if manifold.kind == ManifoldKind.EUCLIDEAN:
        return data
    chol = np.linalg.cholesky(data)
    il = np.tril_indices(manifold.dim)
    return chol[:, il[0], il[1]]


def pair_features(
    spec: KernelSpec, manifold: Manifold, xs: Sequence[ManifoldPoint], ys: Sequence[ManifoldPoint]
) -> Features:
    """Pairwise invariants the kernel profile depends on."""
    if spec.is_product:
        return tuple(
            pair_features(f, m, factor_stack(xs, i), factor_stack(ys, i))
            for i, (f, m) in enumerate(zip(spec.factors, manifold.factors))
        )

    family = spec.family
    if family in EUCLIDEAN_FAMILIES:
        return cdist(ambient_coordinates(xs), ambient_coordinates(ys))
    if family == KernelFamily.CHOLESKY_EUCLIDEAN:
        return cdist(cholesky_vectors(xs), cholesky_vectors(ys))
    if family == KernelFamily.NAIVE_GEODESIC_SE:
        return pairwise_distances(xs, ys)

    kind = manifold.kind
    if kind == ManifoldKind.TORUS:
        return wrap_unit(stack(xs)[:, None, :] - stack(ys)[None, :, :])
    if kind == ManifoldKind.SPHERE:
        return np.cos(pairwise_distances(xs, ys))
    if kind == ManifoldKind.SPD:
        return spd_log_spectrum(stack(xs), stack(ys))
    return pairwise_distances(xs, ys)


def diagonal_features(spec: KernelSpec, manifold: Manifold) -> Features:
    """Features of a pair (x, x), shaped as a single pair."""
    if spec.is_product:
        return tuple(diagonal_features(f, m) for f, m in zip(spec.factors, manifold.factors))
    if spec.family in RIEMANNIAN_FAMILIES:
        if manifold.kind == ManifoldKind.TORUS:
            return np.zeros((1, 1, manifold.dim))
        if manifold.kind == ManifoldKind.SPD:
            return np.zeros((1, 1, 2))
        if manifold.kind == ManifoldKind.SPHERE:
            return np.ones((1, 1))
    return np.zeros((1, 1))


# ==================== Profiles ====================

def _series_bound(fixed, kappa: float, nu: float, spec: KernelSpec) -> int:
    if fixed is not None:
        return int(fixed)
    return hk.auto_series_bound(kappa, nu, spec.trunc.min_terms, spec.trunc.max_terms)


def _sphere_values(cos_angle: np.ndarray, d: int, spec: KernelSpec, bound=None) -> np.ndarray:
    trunc = spec.trunc
    n_max = _series_bound(bound if bound is not None else trunc.sphere_N, spec.kappa, spec.nu, spec)
    coeffs = hk.sphere_coefficients(d, spec.nu, spec.kappa, n_max, trunc.series_rel_tol, trunc.min_terms)
    return hk.sphere_profile(cos_angle, d, coeffs)


def _so3_values(theta: np.ndarray, spec: KernelSpec, bound=None) -> np.ndarray:
    trunc = spec.trunc
    l_max = _series_bound(bound if bound is not None else trunc.so3_L, spec.kappa, spec.nu, spec)
    coeffs = hk.so3_coefficients(spec.nu, spec.kappa, l_max, trunc.series_rel_tol, trunc.min_terms)
    return hk.so3_profile(theta, coeffs)


def _torus_values(delta: np.ndarray, spec: KernelSpec, bound=None) -> np.ndarray:
    bound = bound if bound is not None else spec.trunc.torus_L
    if math.isinf(spec.nu):
        return hk.torus_heat_profile(delta, spec.kappa, bound or hk.torus_auto_bound(spec.kappa))
    d = delta.shape[-1]
    return hk.torus_matern_profile(delta, spec.nu, spec.kappa, bound or hk.torus_matern_bound(spec.nu, spec.kappa, d))


def _with_heat(normalized_heat: Callable[[float], np.ndarray], spec: KernelSpec) -> np.ndarray:
    """Heat kernel at kappa, or the Matérn integral over length scales."""
    if math.isinf(spec.nu):
        return normalized_heat(spec.kappa)
    trunc = spec.trunc
    return hk.matern_from_heat(
        normalized_heat,
        spec.nu,
        spec.kappa,
        method=trunc.matern_quadrature,
        nodes=trunc.matern_quad_nodes,
        limit=trunc.line_quad_limit,
    )


def _riemannian_profile(spec: KernelSpec, manifold: Manifold, feats: np.ndarray) -> np.ndarray:
    kind = manifold.kind
    trunc = spec.trunc
    if kind == ManifoldKind.EUCLIDEAN:
        return hk.euclidean_matern(feats, spec.nu, spec.kappa)
    if kind == ManifoldKind.TORUS:
        return _torus_values(feats, spec)
    if kind == ManifoldKind.SPHERE:
        return _sphere_values(feats, manifold.dim, spec)
    if kind == ManifoldKind.ROTATION:
        return _so3_values(feats, spec)
    if kind == ManifoldKind.HYPERBOLIC:
        return _with_heat(
            lambda ell: hk.hyperbolic_heat_normalized(
                feats, ell, manifold.dim, trunc.line_quad_abs_tol, trunc.line_quad_limit
            ),
            spec,
        )
    if kind == ManifoldKind.SPD:
        return _with_heat(
            lambda ell: hk.spd2_heat_normalized(feats, ell, trunc.line_quad_abs_tol, trunc.line_quad_limit),
            spec,
        )
    raise KernelConfigError(f"No Riemannian kernel on {manifold.name}")


def profile(spec: KernelSpec, manifold: Manifold, feats: Features) -> np.ndarray:
    """
    Unnormalized kernel values of a single (non-product) spec.

    Args:
        spec: Kernel spec
        manifold: Manifold the features were computed on
        feats: Output of pair_features
    """
    family = spec.family
    if family == KernelFamily.NAIVE_GEODESIC_SE:
        return np.exp(-(feats ** 2) / spec.kappa)
    if family in EUCLIDEAN_FAMILIES or family == KernelFamily.CHOLESKY_EUCLIDEAN:
        return hk.euclidean_matern(feats, spec.nu, spec.kappa)
    return _riemannian_profile(spec, manifold, feats)


@lru_cache(maxsize=2048)
def _unit_normalizer(spec: KernelSpec, manifold: Manifold) -> float:
    value = float(np.asarray(profile(spec, manifold, diagonal_features(spec, manifold))).reshape(-1)[0])
    if not (math.isfinite(value) and value > 0):
        raise KernelConfigError(f"Kernel diagonal is {value} for {spec.family.value} on {manifold.name}")
    return value


def normalization_constant(spec: KernelSpec, manifold: Manifold) -> float:
    """
    Diagonal value C of the unnormalized kernel, so sigma2 * k / C has variance sigma2.

    Product kernels return the product of their factor constants.

    Raises:
        KernelConfigError: If the diagonal is zero or non-finite
    """
    check_supported(spec, manifold)
    if spec.is_product:
        return float(np.prod([normalization_constant(f, m) for f, m in zip(spec.factors, manifold.factors)]))
    return _unit_normalizer(spec.with_sigma2(1.0), manifold)


def _normalized(spec: KernelSpec, manifold: Manifold, feats: Features) -> np.ndarray:
    """Unit-variance kernel values from features."""
    if spec.is_product:
        values = 1.0
        for f, m, fe in zip(spec.factors, manifold.factors, feats):
            values = values * _normalized(f, m, fe)
        return np.asarray(values)
    return profile(spec, manifold, feats) / normalization_constant(spec, manifold)


# ==================== Public API ====================

def _manifold_of(points: Sequence[ManifoldPoint]) -> Manifold:
    if len(points) == 0:
        raise KernelConfigError("Need at least one point")
    manifold = points[0].manifold
    for p in points:
        if p.manifold != manifold:
            raise ManifoldMismatchError(f"Points on {p.manifold.name} and {manifold.name}")
    return manifold


def cross_gram(spec: KernelSpec, xs: Sequence[ManifoldPoint], ys: Sequence[ManifoldPoint]) -> np.ndarray:
    """Kernel matrix K[i, j] = k(xs[i], ys[j])."""
    manifold = _manifold_of(xs)
    if _manifold_of(ys) != manifold:
        raise ManifoldMismatchError(f"Points on {manifold.name} and {ys[0].manifold.name}")
    check_supported(spec, manifold)
    feats = pair_features(spec, manifold, xs, ys)
    return spec.sigma2 * _normalized(spec, manifold, feats)


def _upper(feats: Features, iu) -> Features:
    if isinstance(feats, tuple):
        return tuple(_upper(f, iu) for f in feats)
    return feats[iu]


def gram(spec: KernelSpec, points: Sequence[ManifoldPoint]) -> np.ndarray:
    """
    Symmetric Gram matrix of ``points``.

    Each unordered pair is evaluated once and mirrored; the diagonal is
    sigma2. Naive geodesic kernels log their smallest eigenvalue.
    """
    manifold = _manifold_of(points)
    check_supported(spec, manifold)
    n = len(points)
    matrix = np.full((n, n), spec.sigma2)
    if n > 1:
        iu = np.triu_indices(n, k=1)
        feats = _upper(pair_features(spec, manifold, points, points), iu)
        values = spec.sigma2 * _normalized(spec, manifold, feats)
        matrix[iu] = values
        matrix[iu[1], iu[0]] = values
    if spec.family == KernelFamily.NAIVE_GEODESIC_SE:
        min_eig = gram_min_eigenvalue(matrix)
        if min_eig < 0:
            logger.warning(f"Naive geodesic Gram on {manifold.name} is indefinite: min eigenvalue {min_eig:.3e}")
        else:
            logger.info(f"Naive geodesic Gram on {manifold.name}: min eigenvalue {min_eig:.3e}")
    return matrix


def gram_min_eigenvalue(matrix: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(matrix)[0])


def kernel_eval(spec: KernelSpec, x: ManifoldPoint, y: ManifoldPoint) -> float:
    """
    Normalized kernel value k(x, y).

    Raises:
        ManifoldMismatchError: If x and y live on different manifolds
        KernelConfigError: If the family is not defined on the manifold
    """
    if x.manifold != y.manifold:
        raise ManifoldMismatchError(f"Points on {x.manifold.name} and {y.manifold.name}")
    return float(cross_gram(spec, [x], [y])[0, 0])


def product_kernel(spec: KernelSpec, xs: Sequence[ManifoldPoint], ys: Sequence[ManifoldPoint]) -> float:
    """
    sigma2 * prod_j k_j(xs[j], ys[j]) with unit-variance factor kernels.

    Args:
        spec: Product spec, one factor spec per point pair
        xs: Factor points of the first argument
        ys: Factor points of the second argument

    Raises:
        KernelConfigError: If the factor counts differ
    """
    if not spec.is_product:
        raise KernelConfigError("product_kernel needs a product spec")
    if not (len(spec.factors) == len(xs) == len(ys)):
        raise KernelConfigError(
            f"Product kernel has {len(spec.factors)} factors, got {len(xs)} and {len(ys)} points"
        )
    value = spec.sigma2
    for factor_spec, x, y in zip(spec.factors, xs, ys):
        value *= kernel_eval(factor_spec, x, y)
    return float(value)


def naive_geodesic_se(x: ManifoldPoint, y: ManifoldPoint, kappa: float, sigma2: float = 1.0) -> float:
    """sigma2 * exp(-d_g(x, y)^2 / kappa); not positive definite for every kappa."""
    spec = KernelSpec.create(KernelFamily.NAIVE_GEODESIC_SE, kappa=kappa, sigma2=sigma2)
    return kernel_eval(spec, x, y)


# ==================== Unnormalized per-manifold kernels ====================

def _spec(nu: float, kappa: float) -> KernelSpec:
    family = KernelFamily.RIEMANNIAN_SE if math.isinf(nu) else KernelFamily.RIEMANNIAN_MATERN
    return KernelSpec.create(family, nu=nu, kappa=kappa)


def _torus_delta(x: ManifoldPoint, y: ManifoldPoint) -> np.ndarray:
    if x.manifold != y.manifold or x.manifold.kind != ManifoldKind.TORUS:
        raise ManifoldMismatchError("Torus kernels need two points on the same torus")
    return wrap_unit(x.data - y.data)[None, :]


def heat_torus(x: ManifoldPoint, y: ManifoldPoint, kappa: float, L: int = None) -> float:
    """Truncated torus heat lattice sum; L defaults to the automatic bound."""
    delta = _torus_delta(x, y)
    return float(hk.torus_heat_profile(delta, kappa, L or hk.torus_auto_bound(kappa))[0])


def matern_torus(x: ManifoldPoint, y: ManifoldPoint, nu: float, kappa: float, L: int = None) -> float:
    """Truncated torus Matérn lattice sum with weights (2 nu / kappa^2 + 4 pi^2 |tau|^2)^(-nu - d/2)."""
    delta = _torus_delta(x, y)
    d = delta.shape[-1]
    bound = L or hk.torus_matern_bound(nu, kappa, d)
    return float(hk.matern_weight_scale(nu, kappa, d) * hk.torus_matern_profile(delta, nu, kappa, bound)[0])


def _sphere_cos(x: ManifoldPoint, y: ManifoldPoint) -> np.ndarray:
    if x.manifold != y.manifold or x.manifold.kind != ManifoldKind.SPHERE:
        raise ManifoldMismatchError("Sphere kernels need two points on the same sphere")
    return np.cos(pairwise_distances([x], [y]))[0]


def heat_sphere(x: ManifoldPoint, y: ManifoldPoint, kappa: float, N: int = None) -> float:
    """Gegenbauer series of the heat kernel on S^d, d taken from the points."""
    d = x.manifold.dim
    return float(_sphere_values(_sphere_cos(x, y), d, _spec(math.inf, kappa), N)[0])


def matern_sphere(x: ManifoldPoint, y: ManifoldPoint, nu: float, kappa: float, N: int = None) -> float:
    """Gegenbauer series of the Matérn kernel on S^d."""
    d = x.manifold.dim
    scale = hk.matern_weight_scale(nu, kappa, d)
    return float(scale * _sphere_values(_sphere_cos(x, y), d, _spec(nu, kappa), N)[0])


def _so3_angle(x: ManifoldPoint, y: ManifoldPoint) -> np.ndarray:
    if x.manifold != y.manifold or x.manifold.kind != ManifoldKind.ROTATION or x.manifold.dim != 3:
        raise ManifoldMismatchError("SO3 kernels need two points on SO3")
    return pairwise_distances([x], [y])[0]


def heat_so3(x: ManifoldPoint, y: ManifoldPoint, kappa: float, L: int = None) -> float:
    """Character sum sum_l exp(-kappa^2 l(l+1)/2) (2l+1) chi_l(theta)."""
    return float(_so3_values(_so3_angle(x, y), _spec(math.inf, kappa), L)[0])


def matern_so3(x: ManifoldPoint, y: ManifoldPoint, nu: float, kappa: float, L: int = None) -> float:
    """Character sum with weights (2 nu / kappa^2 + l(l+1))^(-nu - 3/2)."""
    scale = hk.matern_weight_scale(nu, kappa, 3)
    return float(scale * _so3_values(_so3_angle(x, y), _spec(nu, kappa), L)[0])


def heat_hyperbolic(x: ManifoldPoint, y: ManifoldPoint, kappa: float) -> float:
    """Unnormalized heat kernel on H^d, d in {2, 3, 4, 5}."""
    if x.manifold != y.manifold or x.manifold.kind != ManifoldKind.HYPERBOLIC:
        raise ManifoldMismatchError("Hyperbolic kernels need two points on the same hyperbolic space")
    rho = pairwise_distances([x], [y])[0]
    return float(hk.hyperbolic_heat(rho, kappa, x.manifold.dim)[0])


def heat_spd2(x: ManifoldPoint, y: ManifoldPoint, kappa: float) -> float:
    """Unnormalized SPD(2) heat kernel."""
    if x.manifold != y.manifold or x.manifold.kind != ManifoldKind.SPD or x.manifold.dim != 2:
        raise ManifoldMismatchError("SPD kernels need two points on SPD2")
    h = spd_log_spectrum(x.data[None], y.data[None])[0]
    return float(hk.spd2_heat(h, kappa)[0])

