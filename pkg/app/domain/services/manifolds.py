"""
Manifold geometry service - distances, exponential/log maps, tangent bases, sampling.
Part of Domain layer - pure functions over immutable points.

Each space has a geometry object working on raw arrays; the module-level
functions wrap them for ManifoldPoint / TangentVector values. Tangent
vectors are coefficient vectors in the orthonormal basis returned by
tangent_basis at the base point.
"""
import logging
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist
from scipy.spatial.transform import Rotation
from scipy.stats import ortho_group, special_ortho_group

from app.domain.entities.manifold_point import (
    Manifold,
    ManifoldKind,
    ManifoldPoint,
    TangentVector,
)
from app.domain.exceptions import CutLocusError, GeometryError, ManifoldMismatchError

logger = logging.getLogger(__name__)

SPHERE_CUT_TOL = 1e-10
ROTATION_CUT_TOL = 1e-8


def sym_function(matrix: np.ndarray, fn) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its eigendecomposition."""
    w, v = np.linalg.eigh(matrix)
    return (v * fn(w)[..., None, :]) @ np.swapaxes(v, -1, -2)


def wrap_unit(delta: np.ndarray) -> np.ndarray:
    """Wrap coordinate differences into [-1/2, 1/2]."""
    return delta - np.round(delta)


def lorentz_inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Minkowski form -u0 v0 + sum_i ui vi along the last axis."""
    return -u[..., 0] * v[..., 0] + np.sum(u[..., 1:] * v[..., 1:], axis=-1)


def lorentz_boost(p: np.ndarray) -> np.ndarray:
    """Lorentz transform mapping the origin (1, 0, ..., 0) to p."""
    d = p.size - 1
    ps = p[1:]
    boost = np.empty((d + 1, d + 1))
    boost[0, 0] = p[0]
    boost[0, 1:] = ps
    boost[1:, 0] = ps
    boost[1:, 1:] = np.eye(d) + np.outer(ps, ps) / (1.0 + p[0])
    return boost


def spd_basis(dim: int) -> np.ndarray:
    """Frobenius-orthonormal basis of symmetric matrices: diagonal units, then scaled off-diagonals."""
    mats = []
    for i in range(dim):
        e = np.zeros((dim, dim))
        e[i, i] = 1.0
        mats.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim))
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
            mats.append(e)
    return np.array(mats)


def skew_basis(dim: int) -> np.ndarray:
    """Generators E_ij - E_ji for i < j, row-major order."""
    mats = []
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim))
            e[i, j] = 1.0
            e[j, i] = -1.0
            mats.append(e)
    return np.array(mats)


class EuclideanGeometry:
    """Flat space; bounds only matter for sampling and projection."""

    def distances(self, m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return cdist(x, y)

    def exp(self, m: Manifold, p: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        return p + coeffs

    def log(self, m: Manifold, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return q - p

    def basis(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return np.eye(m.dim)

    def inner(self, m: Manifold, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(u * v))

    def random(self, m: Manifold, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(m.lower, m.upper, size=(n, m.dim))

    def project(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return np.clip(p, m.lower, m.upper)


class SphereGeometry:
    """Unit sphere S^d in R^(d+1) with the round metric."""

    def distances(self, m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        diff = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
        summ = np.linalg.norm(x[:, None, :] + y[None, :, :], axis=-1)
        return 2.0 * np.arctan2(diff, summ)

    def exp(self, m: Manifold, p: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(coeffs)
        if r == 0.0:
            return p.copy()
        v = coeffs @ self.basis(m, p)
        q = np.cos(r) * p + np.sin(r) * v / r
        return q / np.linalg.norm(q)

    def log(self, m: Manifold, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        cos_angle = float(np.dot(p, q))
        if cos_angle <= -1.0 + SPHERE_CUT_TOL:
            raise CutLocusError("Sphere log_map undefined at the antipode")
        u = q - cos_angle * p
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return np.zeros(m.dim)
        angle = 2.0 * np.arctan2(np.linalg.norm(p - q), np.linalg.norm(p + q))
        return self.basis(m, p) @ (angle * u / norm_u)

    def basis(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return linalg.null_space(p[None, :]).T

    def inner(self, m: Manifold, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u, v))

    def random(self, m: Manifold, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, m.dim + 1))
        return z / np.linalg.norm(z, axis=1, keepdims=True)

    def project(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return p / np.linalg.norm(p)


class TorusGeometry:
    """
    Flat torus with coordinates in [0, 1).
    Tangent coordinates are angles in radians.
    """

    def distances(self, m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        delta = wrap_unit(x[:, None, :] - y[None, :, :])
        return 2.0 * np.pi * np.linalg.norm(delta, axis=-1)

    def exp(self, m: Manifold, p: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        return np.mod(p + coeffs / (2.0 * np.pi), 1.0)

    def log(self, m: Manifold, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return 2.0 * np.pi * wrap_unit(q - p)

    def basis(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return np.eye(m.dim)

    def inner(self, m: Manifold, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u, v))

    def random(self, m: Manifold, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(0.0, 1.0, size=(n, m.dim))

    def project(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return np.mod(p, 1.0)


class RotationGeometry:
    """
    SO(d) with the bi-invariant metric <U, V> = tr(U^T V) / 2,
    so a rotation by angle theta sits at distance theta from the identity.
    """

    def angles(self, m: Manifold, rel: np.ndarray) -> np.ndarray:
        """Geodesic distance from I of the relative rotations ``rel`` (..., d, d)."""
        d = m.dim
        if d == 2:
            return np.abs(np.arctan2(rel[..., 1, 0], rel[..., 0, 0]))
        if d == 3:
            skew = rel - np.swapaxes(rel, -1, -2)
            sin_part = np.linalg.norm(skew, axis=(-2, -1)) / (2.0 * np.sqrt(2.0))
            cos_part = (np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0
            return np.arctan2(sin_part, cos_part)
        eig_angles = np.angle(np.linalg.eigvals(rel))
        return np.sqrt(0.5 * np.sum(eig_angles ** 2, axis=-1))

    def distances(self, m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        rel = np.einsum("iab,jac->ijbc", x, y)
        return self.angles(m, rel)

    def exp(self, m: Manifold, p: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        omega = np.tensordot(coeffs, skew_basis(m.dim), axes=1)
        if m.dim == 3:
            rotvec = np.array([omega[2, 1], omega[0, 2], omega[1, 0]])
            step = Rotation.from_rotvec(rotvec).as_matrix()
        else:
            step = linalg.expm(omega)
        return p @ step

    def log(self, m: Manifold, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        rel = p.T @ q
        if float(self.angles(m, rel[None])[0]) >= np.pi - ROTATION_CUT_TOL and m.dim <= 3:
            raise CutLocusError("Rotation log_map undefined for a rotation by pi")
        if m.dim == 3:
            w = Rotation.from_matrix(rel).as_rotvec()
            omega = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
        else:
            eig_angles = np.abs(np.angle(np.linalg.eigvals(rel)))
            if np.max(eig_angles) >= np.pi - ROTATION_CUT_TOL:
                raise CutLocusError("Rotation log_map undefined for a rotation by pi")
            omega = np.real(linalg.logm(rel))
            omega = 0.5 * (omega - omega.T)
        iu = np.triu_indices(m.dim, k=1)
        return omega[iu]

    def basis(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return np.einsum("ab,kbc->kac", p, skew_basis(m.dim))

    def inner(self, m: Manifold, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        return 0.5 * float(np.sum(u * v))

    def random(self, m: Manifold, rng: np.random.Generator, n: int) -> np.ndarray:
        mats = special_ortho_group.rvs(dim=m.dim, size=n, random_state=rng)
        return np.asarray(mats).reshape(n, m.dim, m.dim)

    def project(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        u, _, vt = np.linalg.svd(p)
        fix = np.ones(m.dim)
        fix[-1] = np.sign(np.linalg.det(u @ vt))
        return (u * fix) @ vt


class SpdGeometry:
    """SPD(d) with the affine-invariant metric <U, V>_p = tr(p^-1 U p^-1 V)."""

    def distances(self, m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        inv_sqrt = sym_function(x, lambda w: 1.0 / np.sqrt(w))
        whitened = np.einsum("iab,jbc,icd->ijad", inv_sqrt, y, inv_sqrt)
        whitened = 0.5 * (whitened + np.swapaxes(whitened, -1, -2))
        logs = np.log(np.linalg.eigvalsh(whitened))
        return np.sqrt(np.sum(logs ** 2, axis=-1))

    def exp(self, m: Manifold, p: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        sym = np.tensordot(coeffs, spd_basis(m.dim), axes=1)
        root = sym_function(p, np.sqrt)
        q = root @ sym_function(sym, np.exp) @ root
        return 0.5 * (q + q.T)

    def log(self, m: Manifold, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        inv_root = sym_function(p, lambda w: 1.0 / np.sqrt(w))
        whitened = inv_root @ q @ inv_root
        sym = sym_function(0.5 * (whitened + whitened.T), np.log)
        return np.tensordot(spd_basis(m.dim), sym, axes=([1, 2], [0, 1]))

    def basis(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        root = sym_function(p, np.sqrt)
        return np.einsum("ab,kbc,cd->kad", root, spd_basis(m.dim), root)

    def inner(self, m: Manifold, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        p_inv = np.linalg.inv(p)
        return float(np.trace(p_inv @ u @ p_inv @ v))

    def random(self, m: Manifold, rng: np.random.Generator, n: int) -> np.ndarray:
        lo, hi = np.log(m.eig_bounds[0]), np.log(m.eig_bounds[1])
        eigs = np.exp(rng.uniform(lo, hi, size=(n, m.dim)))
        vecs = np.asarray(ortho_group.rvs(dim=m.dim, size=n, random_state=rng)).reshape(n, m.dim, m.dim)
        mats = np.einsum("nab,nb,ncb->nac", vecs, eigs, vecs)
        return 0.5 * (mats + np.swapaxes(mats, -1, -2))

    def project(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return 0.5 * (p + p.T)


class HyperbolicGeometry:
    """Hyperbolic space H^d in the Lorentz model."""

    def distances(self, m: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        diff = x[:, None, :] - y[None, :, :]
        chord = np.clip(lorentz_inner(diff, diff), 0.0, None)
        return 2.0 * np.arcsinh(np.sqrt(chord) / 2.0)

    def exp(self, m: Manifold, p: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(coeffs)
        if r == 0.0:
            return p.copy()
        at_origin = np.concatenate([[np.cosh(r)], np.sinh(r) * coeffs / r])
        return self.project(m, lorentz_boost(p) @ at_origin)

    def log(self, m: Manifold, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        boost = lorentz_boost(p)
        sign = np.ones(m.dim + 1)
        sign[0] = -1.0
        pulled = (sign[:, None] * boost.T * sign[None, :]) @ q
        spatial = pulled[1:]
        s = np.linalg.norm(spatial)
        if s == 0.0:
            return np.zeros(m.dim)
        return np.arcsinh(s) * spatial / s

    def basis(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        return lorentz_boost(p)[:, 1:].T

    def inner(self, m: Manifold, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        return float(lorentz_inner(u, v))

    def random(self, m: Manifold, rng: np.random.Generator, n: int) -> np.ndarray:
        z = m.scale * rng.standard_normal((n, m.dim))
        r = np.linalg.norm(z, axis=1, keepdims=True)
        direction = np.divide(z, r, out=np.zeros_like(z), where=r > 0)
        return np.concatenate([np.cosh(r), np.sinh(r) * direction], axis=1)

    def project(self, m: Manifold, p: np.ndarray) -> np.ndarray:
        spatial = p[1:]
        return np.concatenate([[np.sqrt(1.0 + np.dot(spatial, spatial))], spatial])


GEOMETRIES: Dict[ManifoldKind, object] = {
    ManifoldKind.EUCLIDEAN: EuclideanGeometry(),
    ManifoldKind.SPHERE: SphereGeometry(),
    ManifoldKind.TORUS: TorusGeometry(),
    ManifoldKind.ROTATION: RotationGeometry(),
    ManifoldKind.SPD: SpdGeometry(),
    ManifoldKind.HYPERBOLIC: HyperbolicGeometry(),
}


def geometry(manifold: Manifold):
    """Look up the geometry object of a non-product manifold."""
    if manifold.kind == ManifoldKind.PRODUCT:
        raise GeometryError("Product manifolds are handled factor by factor")
    return GEOMETRIES[manifold.kind]


def _check_same(p: ManifoldPoint, q: ManifoldPoint) -> None:
    if p.manifold != q.manifold:
        raise ManifoldMismatchError(f"Points on {p.manifold.name} and {q.manifold.name}")


def stack(points: Sequence[ManifoldPoint]) -> np.ndarray:
    """Stack point data into one array of shape (n, *ambient_shape)."""
    if len(points) == 0:
        raise GeometryError("Need at least one point")
    manifold = points[0].manifold
    for p in points:
        if p.manifold != manifold:
            raise ManifoldMismatchError(f"Points on {p.manifold.name} and {manifold.name}")
    return np.stack([p.data for p in points])


def factor_stack(points: Sequence[ManifoldPoint], index: int) -> List[ManifoldPoint]:
    """Factor ``index`` of a list of product points."""
    return [p.parts[index] for p in points]


def pairwise_distances(xs: Sequence[ManifoldPoint], ys: Sequence[ManifoldPoint]) -> np.ndarray:
    """Geodesic distance matrix between two point lists on the same manifold."""
    manifold = xs[0].manifold
    if ys[0].manifold != manifold:
        raise ManifoldMismatchError(f"Points on {manifold.name} and {ys[0].manifold.name}")
    if manifold.kind == ManifoldKind.PRODUCT:
        total = np.zeros((len(xs), len(ys)))
        for i in range(len(manifold.factors)):
            total += pairwise_distances(factor_stack(xs, i), factor_stack(ys, i)) ** 2
        return np.sqrt(total)
    return geometry(manifold).distances(manifold, stack(xs), stack(ys))


def geodesic_distance(p: ManifoldPoint, q: ManifoldPoint) -> float:
    """
    Geodesic distance between two points.

    Args:
        p: First point
        q: Second point on the same manifold

    Returns:
        Nonnegative distance

    Raises:
        ManifoldMismatchError: If the points live on different manifolds
    """
    _check_same(p, q)
    return float(pairwise_distances([p], [q])[0, 0])


def retract(p: ManifoldPoint, coeffs: np.ndarray) -> ManifoldPoint:
    """Exponential map from raw basis coefficients."""
    manifold = p.manifold
    coeffs = np.asarray(coeffs, dtype=float)
    if manifold.kind == ManifoldKind.PRODUCT:
        parts = []
        offset = 0
        for part in p.parts:
            k = part.manifold.intrinsic_dim
            parts.append(retract(part, coeffs[offset:offset + k]))
            offset += k
        return ManifoldPoint.from_parts(manifold, parts)
    data = geometry(manifold).exp(manifold, p.data, coeffs)
    return ManifoldPoint.unchecked(manifold, data)


def exp_map(v: TangentVector) -> ManifoldPoint:
    """Follow the geodesic from ``v.base`` with initial velocity ``v``."""
    return retract(v.base, v.coeffs)


def log_coeffs(p: ManifoldPoint, q: ManifoldPoint) -> np.ndarray:
    """Raw basis coefficients of log_map(p, q)."""
    _check_same(p, q)
    manifold = p.manifold
    if manifold.kind == ManifoldKind.PRODUCT:
        return np.concatenate([log_coeffs(a, b) for a, b in zip(p.parts, q.parts)])
    return np.asarray(geometry(manifold).log(manifold, p.data, q.data), dtype=float)


def log_map(p: ManifoldPoint, q: ManifoldPoint) -> TangentVector:
    """
    Inverse of exp_map at ``p``.

    Raises:
        CutLocusError: If q is on the cut locus of p
        ManifoldMismatchError: If the points live on different manifolds
    """
    return TangentVector.create(p, log_coeffs(p, q))


def tangent_basis(p: ManifoldPoint) -> Union[np.ndarray, Tuple[np.ndarray, ...]]:
    """
    Orthonormal basis of the tangent space at p in ambient representation.

    Returns an array of shape (intrinsic_dim, *ambient_shape); product
    points give one basis per factor.
    """
    manifold = p.manifold
    if manifold.kind == ManifoldKind.PRODUCT:
        return tuple(tangent_basis(part) for part in p.parts)
    return geometry(manifold).basis(manifold, p.data)


def metric_inner(p: ManifoldPoint, u: np.ndarray, v: np.ndarray) -> float:
    """Riemannian inner product of two ambient tangent vectors at p."""
    return geometry(p.manifold).inner(p.manifold, p.data, u, v)


def random_points(rng: np.random.Generator, manifold: Manifold, n: int) -> List[ManifoldPoint]:
    """Draw ``n`` independent points from the manifold's sampling law."""
    if manifold.kind == ManifoldKind.PRODUCT:
        columns = [random_points(rng, factor, n) for factor in manifold.factors]
        return [ManifoldPoint.from_parts(manifold, row) for row in zip(*columns)]
    data = geometry(manifold).random(manifold, rng, n)
    return [ManifoldPoint.unchecked(manifold, row) for row in data]


def random_point(rng: np.random.Generator, manifold: Manifold) -> ManifoldPoint:
    """
    Draw one point.

    Sphere and rotation group are Haar-uniform, the torus uniform, SPD has
    log-uniform eigenvalues in the descriptor's box with Haar eigenvectors,
    hyperbolic space maps a Gaussian tangent vector at the origin, and
    Euclidean space is uniform in the descriptor's box.
    """
    return random_points(rng, manifold, 1)[0]


def project_to_domain(p: ManifoldPoint) -> ManifoldPoint:
    """Clip Euclidean coordinates into their box; other spaces are returned unchanged."""
    manifold = p.manifold
    if manifold.kind == ManifoldKind.PRODUCT:
        return ManifoldPoint.from_parts(manifold, [project_to_domain(part) for part in p.parts])
    if manifold.kind != ManifoldKind.EUCLIDEAN:
        return p
    clipped = geometry(manifold).project(manifold, p.data)
    if np.array_equal(clipped, p.data):
        return p
    return ManifoldPoint.unchecked(manifold, clipped)


def origin(manifold: Manifold) -> ManifoldPoint:
    """Canonical base point: north pole, zero angles, identity, origin of the hyperboloid, box center."""
    kind = manifold.kind
    if kind == ManifoldKind.PRODUCT:
        return ManifoldPoint.from_parts(manifold, [origin(f) for f in manifold.factors])
    if kind == ManifoldKind.SPHERE:
        data = np.zeros(manifold.dim + 1)
        data[-1] = 1.0
    elif kind == ManifoldKind.HYPERBOLIC:
        data = np.zeros(manifold.dim + 1)
        data[0] = 1.0
    elif kind in (ManifoldKind.ROTATION, ManifoldKind.SPD):
        data = np.eye(manifold.dim)
    elif kind == ManifoldKind.EUCLIDEAN:
        data = 0.5 * (np.asarray(manifold.lower) + np.asarray(manifold.upper))
    else:
        data = np.zeros(manifold.dim)
    return ManifoldPoint.unchecked(manifold, data)


def ambient_coordinates(points: Sequence[ManifoldPoint]) -> np.ndarray:
    """
    Flat coordinate rows used by Euclidean baselines and the point codec.

    Rotations are flattened row-major, SPD matrices give their upper
    triangle row by row, product points concatenate their factors.
    """
    manifold = points[0].manifold
    if manifold.kind == ManifoldKind.PRODUCT:
        return np.concatenate(
            [ambient_coordinates(factor_stack(points, i)) for i in range(len(manifold.factors))], axis=1
        )
    data = stack(points)
    if manifold.kind == ManifoldKind.ROTATION:
        return data.reshape(len(points), -1)
    if manifold.kind == ManifoldKind.SPD:
        iu = np.triu_indices(manifold.dim)
        return data[:, iu[0], iu[1]]
    return data.reshape(len(points), -1)
