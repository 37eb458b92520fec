"""
Point and manifold codec.
Part of Infrastructure layer.

Points travel as flat coordinate lists (see manifolds.ambient_coordinates);
manifolds as plain dictionaries.
"""
from typing import Any, Dict, List, Sequence

import numpy as np

from app.domain.entities.manifold_point import Manifold, ManifoldKind, ManifoldPoint
from app.domain.exceptions import InvalidPointError
from app.domain.services.manifolds import ambient_coordinates

COORD_SEPARATOR = ";"


def manifold_to_dict(manifold: Manifold) -> Dict[str, Any]:
    """Descriptor as JSON-compatible dictionary."""
    if manifold.kind == ManifoldKind.PRODUCT:
        return {"kind": manifold.kind.value, "factors": [manifold_to_dict(f) for f in manifold.factors]}
    payload: Dict[str, Any] = {"kind": manifold.kind.value, "dim": manifold.dim}
    if manifold.kind == ManifoldKind.EUCLIDEAN:
        payload["lower"] = list(manifold.lower)
        payload["upper"] = list(manifold.upper)
    elif manifold.kind == ManifoldKind.SPD:
        payload["eig_bounds"] = list(manifold.eig_bounds)
    elif manifold.kind == ManifoldKind.HYPERBOLIC:
        payload["scale"] = manifold.scale
    return payload


def manifold_from_dict(payload: Dict[str, Any]) -> Manifold:
    """
    Inverse of manifold_to_dict.

    Raises:
        ValueError: If the descriptor is invalid
    """
    kind = ManifoldKind(payload["kind"])
    if kind == ManifoldKind.PRODUCT:
        return Manifold.product(*(manifold_from_dict(f) for f in payload["factors"]))
    lower = payload.get("lower")
    upper = payload.get("upper")
    return Manifold.create(
        kind,
        int(payload["dim"]),
        lower=tuple(lower) if lower is not None else None,
        upper=tuple(upper) if upper is not None else None,
        eig_bounds=tuple(payload.get("eig_bounds", (0.001, 5.0))),
        scale=float(payload.get("scale", 1.0)),
    )


def coordinate_count(manifold: Manifold) -> int:
    """Length of a point's flat coordinate list."""
    if manifold.kind == ManifoldKind.PRODUCT:
        return sum(coordinate_count(f) for f in manifold.factors)
    if manifold.kind == ManifoldKind.SPD:
        return manifold.dim * (manifold.dim + 1) // 2
    return int(np.prod(manifold.ambient_shape))


def encode_point(point: ManifoldPoint) -> List[float]:
    return [float(v) for v in ambient_coordinates([point])[0]]


def decode_point(manifold: Manifold, coords: Sequence[float]) -> ManifoldPoint:
    """
    Validated point from flat coordinates.

    Raises:
        InvalidPointError: If the length is wrong or the point is invalid
    """
    coords = np.asarray(coords, dtype=float).ravel()
    expected = coordinate_count(manifold)
    if coords.size != expected:
        raise InvalidPointError(f"{manifold.name} points need {expected} coordinates, got {coords.size}")

    if manifold.kind == ManifoldKind.PRODUCT:
        parts = []
        offset = 0
        for factor in manifold.factors:
            size = coordinate_count(factor)
            parts.append(decode_point(factor, coords[offset:offset + size]))
            offset += size
        return ManifoldPoint.from_parts(manifold, parts)

    if manifold.kind == ManifoldKind.SPD:
        d = manifold.dim
        iu = np.triu_indices(d)
        matrix = np.zeros((d, d))
        matrix[iu] = coords
        matrix = matrix + np.triu(matrix, 1).T
        return ManifoldPoint.create(manifold, matrix)

    return ManifoldPoint.create(manifold, coords.reshape(manifold.ambient_shape))


def decode_points(manifold: Manifold, rows: Sequence[Sequence[float]]) -> List[ManifoldPoint]:
    return [decode_point(manifold, row) for row in rows]


def format_coords(point: ManifoldPoint) -> str:
    """Coordinates as one CSV cell, full precision."""
    return COORD_SEPARATOR.join(format(v, ".17g") for v in encode_point(point))


def parse_coords(cell: str) -> List[float]:
    return [float(v) for v in cell.split(COORD_SEPARATOR)] if cell else []


def json_float(value: float):
    """Float for JSON output; infinite smoothness and other non-finite values become None."""
    value = float(value)
    return value if np.isfinite(value) else None
