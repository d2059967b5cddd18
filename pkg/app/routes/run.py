"""Execução de um algoritmo de identificação do melhor braço."""
from fastapi import APIRouter

from app import service
from app.schemas import RunRequest, RunResponse

router = APIRouter(prefix="/run", tags=["Algoritmos"])


@router.post("", response_model=RunResponse)
def run_algorithm(data: RunRequest):
    """
    Executa o algoritmo com a semente dada. correct compara o braço
    escolhido com o melhor braço verdadeiro da instância.
    """
    return service.run(data)
