"""
Kernels router - Gram matrix evaluation.
Part of Presentation layer.
"""
from fastapi import APIRouter, HTTPException, status

from app.application.use_cases.kernel_use_cases import EvaluateKernelUseCase
from app.presentation.schemas.kernels import GramRequest, GramResponse

router = APIRouter(prefix="/kernels", tags=["kernels"])


@router.post("/gram", response_model=GramResponse)
def evaluate_gram(request: GramRequest):
    """
    Evaluate a kernel on a point set (or between two point sets).
    Naive geodesic kernels also report the minimum eigenvalue of the Gram matrix.
    """
    try:
        use_case = EvaluateKernelUseCase()
        return use_case.execute(
            spec=request.kernel.to_domain(),
            manifold=request.manifold.to_domain(),
            points=request.points,
            others=request.others,
        )
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Failed to evaluate kernel: {str(e)}",
        )
