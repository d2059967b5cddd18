"""
Operações compartilhadas pela CLI e pela API: recebem e devolvem os
schemas Pydantic, convertendo para os tipos numéricos do pacote.
"""
import logging

from app.algorithms import run_algorithm
from app.analysis import TheoryInputs, evaluate_bounds
from app.bandit import summarize, trial_rng
from app.design import e_optimal_design, g_optimal_design, popart_design, round_allocation, xy_allocation
from app.exceptions import NonUniqueBestArm
from app.schemas import (
    DesignRequest,
    DesignResponse,
    EstimateRequest,
    EstimateResponse,
    RunRequest,
    RunResponse,
)
from app.sparse import RegressionProblem, estimate_support

logger = logging.getLogger(__name__)

DESIGN_SOLVERS = {
    "e": e_optimal_design,
    "g": g_optimal_design,
    "xy": xy_allocation,
    "popart": popart_design,
}


def solve_design(req: DesignRequest) -> DesignResponse:
    allocation = DESIGN_SOLVERS[req.kind](req.arms, tol=req.tol, max_iters=req.max_iters)
    counts = None if req.T is None else round_allocation(allocation.weights, req.T).tolist()
    return DesignResponse(
        weights=allocation.weights.tolist(),
        objective=allocation.objective_value,
        certificate_gap=allocation.certificate_gap,
        converged=allocation.converged,
        degenerate=allocation.degenerate,
        iterations=allocation.iterations,
        counts=counts,
    )


def estimate(req: EstimateRequest) -> EstimateResponse:
    result = estimate_support(RegressionProblem(req.X, req.y), req.lambda_init, req.lambda_thres)
    return EstimateResponse(
        theta=result.coefficients.tolist(),
        support=[int(j) for j in result.support],
        theta_init=None if result.initial is None else result.initial.tolist(),
        converged=result.converged,
    )


def run(req: RunRequest) -> RunResponse:
    """Executa um algoritmo com semente fixa; best_arm fica vazio se houver empate."""
    instance = req.instance.to_instance()
    outcome = run_algorithm(
        req.algo,
        instance.arms,
        req.T,
        trial_rng(req.seed),
        instance,
        mode=req.mode,
        T1=req.T1,
        T1_fraction=req.T1_fraction,
        lambda_init=req.lambda_init,
        lambda_thres=req.lambda_thres,
    )
    try:
        best = summarize(instance).best_arm
    except NonUniqueBestArm:
        logger.warning("Instância sem melhor braço único; acerto não avaliado.")
        best = None
    return RunResponse(
        **outcome.to_dict(),
        best_arm=best,
        correct=None if best is None else outcome.chosen_arm == best,
    )


def bounds(inputs: TheoryInputs) -> dict:
    return {name: value.to_dict() for name, value in evaluate_bounds(inputs).items()}
