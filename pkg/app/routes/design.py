"""Desenhos ótimos (E, G, XY, PopArt) e arredondamento para T puxadas."""
from fastapi import APIRouter

from app import service
from app.schemas import DesignRequest, DesignResponse

router = APIRouter(prefix="/design", tags=["Desenho"])


@router.post("", response_model=DesignResponse)
def solve_design(data: DesignRequest):
    """Resolve o desenho pedido em kind; com T, devolve também as contagens do ROUND."""
    return service.solve_design(data)
