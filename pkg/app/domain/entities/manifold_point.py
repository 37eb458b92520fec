"""
Manifold descriptors, points and tangent vectors.
Part of Domain layer - immutable values with per-space validity rules.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from app.domain.exceptions import InvalidPointError, ManifoldMismatchError


class ManifoldKind(str, Enum):
    """Supported spaces."""
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    TORUS = "torus"
    ROTATION = "rotation"
    SPD = "spd"
    HYPERBOLIC = "hyperbolic"
    PRODUCT = "product"


SPHERE_TOL = 1e-10
ROTATION_TOL = 1e-8
SPD_SYM_TOL = 1e-10
HYPERBOLIC_TOL = 1e-8

_NAME_PREFIX = {
    ManifoldKind.EUCLIDEAN: "R",
    ManifoldKind.SPHERE: "S",
    ManifoldKind.TORUS: "T",
    ManifoldKind.ROTATION: "SO",
    ManifoldKind.SPD: "SPD",
    ManifoldKind.HYPERBOLIC: "H",
}


@dataclass(frozen=True)
class Manifold:
    """
    Manifold descriptor.

    ``dim`` is the parameter in the usual name of the space: S^d, T^d, H^d,
    R^d, SO(d) and SPD(d) (matrix size for the last two).
    """

    kind: ManifoldKind
    dim: int
    lower: Tuple[float, ...] = ()
    upper: Tuple[float, ...] = ()
    eig_bounds: Tuple[float, float] = (0.001, 5.0)
    scale: float = 1.0
    factors: Tuple["Manifold", ...] = ()

    @classmethod
    def create(
        cls,
        kind: ManifoldKind,
        dim: int,
        lower: Optional[Tuple[float, ...]] = None,
        upper: Optional[Tuple[float, ...]] = None,
        eig_bounds: Tuple[float, float] = (0.001, 5.0),
        scale: float = 1.0,
        factors: Tuple["Manifold", ...] = (),
    ) -> "Manifold":
        """
        Factory method to create a manifold descriptor.

        Raises:
            ValueError: If the dimension or bounds are invalid
        """
        kind = ManifoldKind(kind)

        if kind == ManifoldKind.PRODUCT:
            if len(factors) < 1:
                raise ValueError("Product manifold needs at least one factor")
            if any(f.kind == ManifoldKind.PRODUCT for f in factors):
                raise ValueError("Nested product manifolds are not supported")
            return cls(kind=kind, dim=len(factors), factors=tuple(factors))

        if dim < 1:
            raise ValueError(f"Manifold dimension must be >= 1, got {dim}")
        if kind == ManifoldKind.SPHERE and dim < 2:
            raise ValueError("Sphere dimension must be >= 2 (use the torus for S^1)")
        if kind == ManifoldKind.ROTATION and dim < 2:
            raise ValueError("Rotation group needs matrix size >= 2")

        if kind == ManifoldKind.EUCLIDEAN:
            lo = tuple(float(v) for v in (lower if lower is not None else (-1.0,) * dim))
            hi = tuple(float(v) for v in (upper if upper is not None else (1.0,) * dim))
            if len(lo) != dim or len(hi) != dim:
                raise ValueError(f"Euclidean bounds must have length {dim}")
            if any(a >= b for a, b in zip(lo, hi)):
                raise ValueError("Euclidean lower bounds must be below upper bounds")
            return cls(kind=kind, dim=dim, lower=lo, upper=hi)

        if kind == ManifoldKind.SPD:
            lo_eig, hi_eig = float(eig_bounds[0]), float(eig_bounds[1])
            if not 0 < lo_eig < hi_eig:
                raise ValueError(f"Invalid SPD eigenvalue box: ({lo_eig}, {hi_eig})")
            return cls(kind=kind, dim=dim, eig_bounds=(lo_eig, hi_eig))

        if kind == ManifoldKind.HYPERBOLIC:
            if scale <= 0:
                raise ValueError(f"Hyperbolic sampling scale must be positive, got {scale}")
            return cls(kind=kind, dim=dim, scale=float(scale))

        return cls(kind=kind, dim=dim)

    @classmethod
    def euclidean(cls, dim: int, lower: float = -1.0, upper: float = 1.0) -> "Manifold":
        return cls.create(ManifoldKind.EUCLIDEAN, dim, (lower,) * dim, (upper,) * dim)

    @classmethod
    def sphere(cls, dim: int) -> "Manifold":
        return cls.create(ManifoldKind.SPHERE, dim)

    @classmethod
    def torus(cls, dim: int) -> "Manifold":
        return cls.create(ManifoldKind.TORUS, dim)

    @classmethod
    def rotation(cls, dim: int = 3) -> "Manifold":
        return cls.create(ManifoldKind.ROTATION, dim)

    @classmethod
    def spd(cls, dim: int = 2, eig_bounds: Tuple[float, float] = (0.001, 5.0)) -> "Manifold":
        return cls.create(ManifoldKind.SPD, dim, eig_bounds=eig_bounds)

    @classmethod
    def hyperbolic(cls, dim: int, scale: float = 1.0) -> "Manifold":
        return cls.create(ManifoldKind.HYPERBOLIC, dim, scale=scale)

    @classmethod
    def product(cls, *factors: "Manifold") -> "Manifold":
        return cls.create(ManifoldKind.PRODUCT, len(factors), factors=tuple(factors))

    @property
    def intrinsic_dim(self) -> int:
        """Dimension of the tangent spaces."""
        if self.kind == ManifoldKind.ROTATION:
            return self.dim * (self.dim - 1) // 2
        if self.kind == ManifoldKind.SPD:
            return self.dim * (self.dim + 1) // 2
        if self.kind == ManifoldKind.PRODUCT:
            return sum(f.intrinsic_dim for f in self.factors)
        return self.dim

    @property
    def ambient_shape(self) -> Tuple[int, ...]:
        """Array shape of point data."""
        if self.kind in (ManifoldKind.SPHERE, ManifoldKind.HYPERBOLIC):
            return (self.dim + 1,)
        if self.kind in (ManifoldKind.ROTATION, ManifoldKind.SPD):
            return (self.dim, self.dim)
        if self.kind == ManifoldKind.PRODUCT:
            return (sum(int(np.prod(f.ambient_shape)) for f in self.factors),)
        return (self.dim,)

    @property
    def is_compact(self) -> bool:
        if self.kind == ManifoldKind.PRODUCT:
            return all(f.is_compact for f in self.factors)
        return self.kind in (ManifoldKind.SPHERE, ManifoldKind.TORUS, ManifoldKind.ROTATION)

    @property
    def injectivity_radius(self) -> float:
        """Radius of the largest ball on which log_map is defined (inf if unbounded)."""
        if self.kind in (ManifoldKind.SPHERE, ManifoldKind.ROTATION, ManifoldKind.TORUS):
            return float(np.pi)
        if self.kind == ManifoldKind.PRODUCT:
            return min(f.injectivity_radius for f in self.factors)
        return float("inf")

    @property
    def diameter(self) -> Optional[float]:
        """Largest geodesic distance, None for unbounded spaces."""
        if self.kind in (ManifoldKind.SPHERE, ManifoldKind.ROTATION):
            return float(np.pi)
        if self.kind == ManifoldKind.TORUS:
            return float(np.pi * np.sqrt(self.dim))
        if self.kind == ManifoldKind.EUCLIDEAN:
            return float(np.linalg.norm(np.subtract(self.upper, self.lower)))
        if self.kind == ManifoldKind.PRODUCT:
            parts = [f.diameter for f in self.factors]
            if any(p is None for p in parts):
                return None
            return float(np.sqrt(sum(p * p for p in parts)))
        return None

    @property
    def name(self) -> str:
        """Short label such as S2, T2, SO3, SPD2 or H3."""
        if self.kind == ManifoldKind.PRODUCT:
            return "x".join(f.name for f in self.factors)
        return f"{_NAME_PREFIX[self.kind]}{self.dim}"


def _validate_data(manifold: Manifold, data: np.ndarray) -> np.ndarray:
    """Check shape and invariants; returns possibly normalized data."""
    kind = manifold.kind

    if data.shape != manifold.ambient_shape:
        raise InvalidPointError(
            f"Point for {manifold.name} must have shape {manifold.ambient_shape}, got {data.shape}"
        )
    if not np.all(np.isfinite(data)):
        raise InvalidPointError(f"Point for {manifold.name} has non-finite entries")

    if kind == ManifoldKind.SPHERE:
        norm = np.linalg.norm(data)
        if abs(norm - 1.0) > SPHERE_TOL:
            raise InvalidPointError(f"Sphere point must have unit norm, got {norm:.3e}")

    elif kind == ManifoldKind.TORUS:
        wrapped = np.mod(data, 1.0)
        # np.mod can round tiny negatives up to exactly 1.0
        data = np.where(wrapped >= 1.0, 0.0, wrapped)

    elif kind == ManifoldKind.ROTATION:
        d = manifold.dim
        if np.max(np.abs(data.T @ data - np.eye(d))) > ROTATION_TOL:
            raise InvalidPointError("Rotation matrix must be orthogonal")
        det = np.linalg.det(data)
        if abs(det - 1.0) > ROTATION_TOL:
            raise InvalidPointError(f"Rotation matrix must have determinant 1, got {det:.6f}")

    elif kind == ManifoldKind.SPD:
        scale = max(1.0, float(np.max(np.abs(data))))
        if np.max(np.abs(data - data.T)) > SPD_SYM_TOL * scale:
            raise InvalidPointError("SPD matrix must be symmetric")
        data = 0.5 * (data + data.T)
        if np.linalg.eigvalsh(data)[0] <= 0:
            raise InvalidPointError("SPD matrix must be positive definite")

    elif kind == ManifoldKind.HYPERBOLIC:
        form = data[0] ** 2 - np.sum(data[1:] ** 2)
        if data[0] <= 0 or abs(form - 1.0) > HYPERBOLIC_TOL * max(1.0, data[0] ** 2):
            raise InvalidPointError("Hyperbolic point must lie on the upper Lorentz sheet")

    elif kind == ManifoldKind.EUCLIDEAN:
        pass

    return data


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """
    Point on a supported manifold.

    Product points keep their factor points in ``parts`` and the
    concatenated factor data in ``data``.
    """

    manifold: Manifold
    data: np.ndarray
    parts: Tuple["ManifoldPoint", ...] = field(default=())

    @classmethod
    def create(cls, manifold: Manifold, data) -> "ManifoldPoint":
        """
        Factory method to create a validated point.

        Torus coordinates are wrapped into [0, 1).

        Raises:
            InvalidPointError: If the data violates the manifold's invariants
        """
        if manifold.kind == ManifoldKind.PRODUCT:
            flat = np.asarray(data, dtype=float).ravel()
            parts = []
            offset = 0
            for factor in manifold.factors:
                size = int(np.prod(factor.ambient_shape))
                if offset + size > flat.size:
                    raise InvalidPointError(f"Point for {manifold.name} is too short")
                chunk = flat[offset:offset + size].reshape(factor.ambient_shape)
                parts.append(cls.create(factor, chunk))
                offset += size
            if offset != flat.size:
                raise InvalidPointError(f"Point for {manifold.name} is too long")
            return cls.from_parts(manifold, parts)

        array = np.array(data, dtype=float)
        array = _validate_data(manifold, array)
        array.setflags(write=False)
        return cls(manifold=manifold, data=array)

    @classmethod
    def unchecked(cls, manifold: Manifold, data: np.ndarray) -> "ManifoldPoint":
        """Wrap data produced by geometry routines without re-validating it."""
        array = np.array(data, dtype=float)
        if manifold.kind == ManifoldKind.TORUS:
            wrapped = np.mod(array, 1.0)
            array = np.where(wrapped >= 1.0, 0.0, wrapped)
        array.setflags(write=False)
        return cls(manifold=manifold, data=array)

    @classmethod
    def from_parts(cls, manifold: Manifold, parts) -> "ManifoldPoint":
        """Assemble a product point from already validated factor points."""
        parts = tuple(parts)
        if len(parts) != len(manifold.factors):
            raise ManifoldMismatchError(
                f"{manifold.name} needs {len(manifold.factors)} factor points, got {len(parts)}"
            )
        for part, factor in zip(parts, manifold.factors):
            if part.manifold != factor:
                raise ManifoldMismatchError(f"Factor point on {part.manifold.name}, expected {factor.name}")
        data = np.concatenate([p.data.ravel() for p in parts])
        data.setflags(write=False)
        return cls(manifold=manifold, data=data, parts=parts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ManifoldPoint):
            return NotImplemented
        return self.manifold == other.manifold and np.array_equal(self.data, other.data)

    def __hash__(self) -> int:
        return hash((self.manifold, self.data.tobytes()))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Tangent vector stored as coefficients in the orthonormal basis at ``base``."""

    base: ManifoldPoint
    coeffs: np.ndarray

    @classmethod
    def create(cls, base: ManifoldPoint, coeffs) -> "TangentVector":
        """
        Factory method to create a tangent vector.

        Raises:
            ValueError: If the coefficient count differs from the intrinsic dimension
        """
        array = np.array(coeffs, dtype=float).ravel()
        expected = base.manifold.intrinsic_dim
        if array.size != expected:
            raise ValueError(
                f"Tangent vector on {base.manifold.name} needs {expected} coefficients, got {array.size}"
            )
        if not np.all(np.isfinite(array)):
            raise ValueError("Tangent vector has non-finite coefficients")
        array.setflags(write=False)
        return cls(base=base, coeffs=array)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))
