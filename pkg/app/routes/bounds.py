"""Limites teóricos de probabilidade de erro."""
from fastapi import APIRouter

from app import service
from app.analysis import TheoryInputs
from app.schemas import BoundResponse

router = APIRouter(prefix="/bounds", tags=["Limites"])


@router.post("", response_model=dict[str, BoundResponse])
def evaluate_bounds(data: TheoryInputs):
    """Só os limites cujas entradas foram informadas aparecem na resposta."""
    return service.bounds(data)
