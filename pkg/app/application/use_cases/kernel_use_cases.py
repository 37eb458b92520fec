"""
Kernel use cases.
Part of Application layer - Gram matrices for externally supplied points.
"""
import logging
from typing import Optional, Sequence

from app.domain.entities.kernel_spec import KernelFamily, KernelSpec
from app.domain.entities.manifold_point import Manifold
from app.domain.services.kernels import check_supported, cross_gram, gram, gram_min_eigenvalue
from app.infrastructure.services.serialization import decode_points, json_float

logger = logging.getLogger(__name__)


class EvaluateKernelUseCase:
    """
    Use case for evaluating a kernel on point sets.
    Returns the Gram matrix, or the cross-covariance when a second set is given.
    """

    def execute(
        self,
        spec: KernelSpec,
        manifold: Manifold,
        points: Sequence[Sequence[float]],
        others: Optional[Sequence[Sequence[float]]] = None,
    ) -> dict:
        """
        Evaluate the kernel.

        Args:
            spec: Kernel spec
            manifold: Manifold the coordinates live on
            points: Flat point coordinates
            others: Optional second point set for a cross-covariance

        Returns:
            Dict with the matrix and, for naive kernels on one set, its
            minimum eigenvalue

        Raises:
            ValueError: If the points or the (kernel, manifold) pair are invalid
        """
        if len(points) == 0:
            raise ValueError("Need at least one point")
        check_supported(spec, manifold)
        xs = decode_points(manifold, points)

        result = {
            "manifold": manifold.name,
            "family": spec.family.value,
            "nu": json_float(spec.nu),
            "kappa": list(spec.kappas),
        }
        if others:
            ys = decode_points(manifold, others)
            matrix = cross_gram(spec, xs, ys)
        else:
            matrix = gram(spec, xs)
            if spec.family == KernelFamily.NAIVE_GEODESIC_SE:
                result["min_eigenvalue"] = gram_min_eigenvalue(matrix)

        logger.info(f"Evaluated {spec.family.value} kernel on {manifold.name}: shape {matrix.shape}")
        result["matrix"] = matrix.tolist()
        return result
