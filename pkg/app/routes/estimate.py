"""Lasso limiarizado sobre (X, y)."""
from fastapi import APIRouter

from app import service
from app.schemas import EstimateRequest, EstimateResponse

router = APIRouter(prefix="/estimate", tags=["Estimação"])


@router.post("", response_model=EstimateResponse)
def estimate(data: EstimateRequest):
    return service.estimate(data)
