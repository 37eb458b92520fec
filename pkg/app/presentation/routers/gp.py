"""
GP router - hyperparameter fitting and prediction.
Part of Presentation layer.
"""
from fastapi import APIRouter, HTTPException, status

from app.application.use_cases.gp_use_cases import FitGpUseCase
from app.presentation.schemas.gp import GpFitRequest, GpFitResponse

router = APIRouter(prefix="/gp", tags=["gp"])


@router.post("/fit", response_model=GpFitResponse)
def fit_gp(request: GpFitRequest):
    """
    Fit kernel hyperparameters by maximum marginal likelihood.
    Returns posterior mean and variance at the test points when given.
    """
    try:
        use_case = FitGpUseCase()
        return use_case.execute(
            spec=request.kernel.to_domain(),
            manifold=request.manifold.to_domain(),
            inputs=request.inputs,
            targets=request.targets,
            test_points=request.test_points,
            noise=request.noise,
            optimize_nu=request.optimize_nu,
            restarts=request.restarts,
            bounds=request.bounds.to_domain() if request.bounds else None,
            seed=request.seed,
        )
    except ValueError as e:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Failed to fit GP: {str(e)}",
        )
