"""
Algoritmos de identificação do melhor braço com orçamento fixo:
OD-LinBAI, GSE, Lasso-OD (e a variante XY), Lasso-OD-CV e PopArt-OD.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional

import numpy as np

from app.analysis import (
    analytical_hyperparameters,
    cv_tune,
    hardness_lower_bound_finite_set,
    od_linbai_rounds,
    summary_hardness,
    x_max_sq,
)
from app.bandit import BanditInstance, pulls_from_counts, sample_rewards, summarize
from app.config import get_settings
from app.design import e_optimal_design, g_optimal_design, gram, round_allocation, xy_allocation
from app.exceptions import InfeasibleBudget, InvalidInstance, RankDeficientArms
from app.sparse import (
    collect_phase1,
    compatibility_constant_s,
    estimate_support,
    popart_estimate,
    sigma_min_lower_bound,
    thresholded_lasso_phase,
)

logger = logging.getLogger(__name__)

AllocationRule = Literal["g_optimal", "xy"]
ALGORITHMS = ("odlinbai", "gse", "lasso-od", "lasso-xy", "popart-od")
MODES = ("explicit", "cv", "analytical", "analytical-lb")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    active_arms: tuple[int, ...]
    counts: tuple[int, ...]
    dimension: int
    budget: int

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "active_arms": list(self.active_arms),
            "counts": list(self.counts),
            "dimension": self.dimension,
            "budget": self.budget,
        }


@dataclass(frozen=True, eq=False)
class AlgorithmOutcome:
    """Braço escolhido, orçamentos por fase e o traço das rodadas."""

    chosen_arm: int
    phase1_budget: int
    phase2_budget: int
    support_found: Optional[np.ndarray] = None
    round_trace: tuple[RoundRecord, ...] = ()
    fallback: bool = False
    details: dict = field(default_factory=dict)

    @property
    def total_pulls(self) -> int:
        return self.phase1_budget + sum(sum(r.counts) for r in self.round_trace)

    def to_dict(self) -> dict:
        return {
            "chosen_arm": self.chosen_arm,
            "phase1_budget": self.phase1_budget,
            "phase2_budget": self.phase2_budget,
            "support_found": None if self.support_found is None else [int(j) for j in self.support_found],
            "fallback": self.fallback,
            "round_trace": [r.to_dict() for r in self.round_trace],
            "details": self.details,
        }


def _round_budgets(T: int, rounds: int) -> list[int]:
    """floor(T/R) por rodada e o resto na última."""
    base = T // rounds
    return [base] * (rounds - 1) + [T - base * (rounds - 1)]


def _reduce(vectors: np.ndarray, dim: int) -> tuple[np.ndarray, int]:
    """Projeta no espaço gerado quando o posto cai (SVD)."""
    rank = int(np.linalg.matrix_rank(vectors)) if vectors.size else 0
    if rank >= dim:
        return vectors, dim
    if rank == 0:
        return np.zeros((vectors.shape[0], 0)), 0
    u, _, _ = np.linalg.svd(vectors.T, full_matrices=False)
    return vectors @ u[:, :rank], rank


def _round_allocation(vectors: np.ndarray, rule: AllocationRule) -> np.ndarray:
    settings = get_settings()
    opts = {"tol": settings.phase_design_tol, "max_iters": settings.phase_design_max_iters}
    if rule == "xy":
        try:
            return xy_allocation(vectors, **opts).weights
        except RankDeficientArms:
            logger.warning("Alocação XY degenerada; usando o desenho G-ótimo na rodada.")
    return g_optimal_design(vectors, **opts).weights


def _eliminate(
    arms: np.ndarray,
    T: int,
    rng: np.random.Generator,
    instance: BanditInstance,
    rounds: int,
    schedule: Callable[[int], int],
    allocation_rule: AllocationRule = "g_optimal",
) -> tuple[int, tuple[RoundRecord, ...]]:
    """
    Eliminação por rodadas: redução de dimensão, desenho, ROUND, MQO só com
    as puxadas da rodada e manutenção dos schedule(r) braços de maior média
    estimada (empates para o menor índice).
    """
    vectors = np.asarray(arms, dtype=np.float64)
    k = vectors.shape[0]
    if k > instance.n_arms:
        raise InvalidInstance("Mais braços do que a instância possui.")
    active = np.arange(k)
    if k == 1:
        return 0, ()
    if T < rounds:
        raise InfeasibleBudget(f"T={T} menor que o número de rodadas {rounds}.")
    dim = vectors.shape[1]
    trace = []
    for r, budget in enumerate(_round_budgets(T, rounds), start=1):
        if active.size == 1:
            break
        vectors, dim = _reduce(vectors, dim)
        if budget < dim:
            raise InfeasibleBudget(f"Rodada {r}: {budget} puxadas para dimensão {dim}.")
        if dim == 0:
            weights = np.full(active.size, 1.0 / active.size)
        else:
            weights = _round_allocation(vectors, allocation_rule)
        counts = round_allocation(weights, budget)
        local = pulls_from_counts(counts)
        rewards = sample_rewards(instance, active[local], rng)
        if dim == 0:
            estimates = np.zeros(active.size)
        else:
            v = (vectors.T * counts) @ vectors
            theta = np.linalg.pinv(v) @ (vectors[local].T @ rewards)
            estimates = vectors @ theta
        keep = min(active.size, schedule(r))
        kept = np.sort(np.argsort(-estimates, kind="stable")[:keep])
        trace.append(
            RoundRecord(
                round=r,
                active_arms=tuple(int(i) for i in active),
                counts=tuple(int(c) for c in counts),
                dimension=dim,
                budget=budget,
            )
        )
        active = active[kept]
        vectors = vectors[kept]
    return int(active[0]), tuple(trace)


def od_linbai(
    arms: np.ndarray,
    T: int,
    rng: np.random.Generator,
    instance: BanditInstance,
    allocation_rule: AllocationRule = "g_optimal",
) -> AlgorithmOutcome:
    """R = ceil(log2 d) rodadas, mantendo ceil(d / 2^r) braços após a rodada r."""
    a = np.asarray(arms, dtype=np.float64)
    d = a.shape[1]
    chosen, trace = _eliminate(
        a, T, rng, instance,
        rounds=od_linbai_rounds(d),
        schedule=lambda r: -(-d // 2 ** r),
        allocation_rule=allocation_rule,
    )
    return AlgorithmOutcome(chosen_arm=chosen, phase1_budget=0, phase2_budget=T, round_trace=trace)


def gse(
    arms: np.ndarray,
    T: int,
    rng: np.random.Generator,
    instance: BanditInstance,
) -> AlgorithmOutcome:
    """Eliminação sucessiva generalizada: R = ceil(log2 K), metade dos braços por rodada."""
    a = np.asarray(arms, dtype=np.float64)
    k = a.shape[0]
    chosen, trace = _eliminate(
        a, T, rng, instance,
        rounds=max(1, (k - 1).bit_length()),
        schedule=lambda r: -(-k // 2 ** r),
    )
    return AlgorithmOutcome(chosen_arm=chosen, phase1_budget=0, phase2_budget=T, round_trace=trace)


def _phase2_on_support(
    arms: np.ndarray,
    support: np.ndarray,
    T2: int,
    rng: np.random.Generator,
    instance: BanditInstance,
    allocation_rule: AllocationRule,
) -> tuple[AlgorithmOutcome, bool]:
    """OD-LinBAI nos braços projetados em S^; suporte vazio ou de posto zero usa todos os d."""
    projected = np.asarray(arms, dtype=np.float64)[:, support]
    fallback = support.size == 0 or not np.any(projected)
    if fallback:
        logger.warning("Suporte estimado vazio ou degenerado; fase 2 em todas as coordenadas.")
        projected = np.asarray(arms, dtype=np.float64)
    return od_linbai(projected, T2, rng, instance, allocation_rule=allocation_rule), fallback


def lasso_od(
    arms: np.ndarray,
    T1: int,
    T2: int,
    lambda_init: float,
    lambda_thres: float,
    rng: np.random.Generator,
    instance: BanditInstance,
    allocation_rule: AllocationRule = "g_optimal",
) -> AlgorithmOutcome:
    """Fase 1 TL com T1 puxadas; fase 2 OD-LinBAI nos braços projetados em S^ com T2."""
    if T1 < 1 or T2 < 1:
        raise InfeasibleBudget("T1 e T2 devem ser >= 1.")
    estimate = thresholded_lasso_phase(arms, T1, lambda_init, lambda_thres, rng, instance)
    phase2, fallback = _phase2_on_support(arms, estimate.support, T2, rng, instance, allocation_rule)
    return replace(
        phase2,
        phase1_budget=T1,
        phase2_budget=T2,
        support_found=estimate.support,
        fallback=fallback,
        details={"lambda_init": lambda_init, "lambda_thres": lambda_thres},
    )


def lasso_xy(arms, T1, T2, lambda_init, lambda_thres, rng, instance) -> AlgorithmOutcome:
    return lasso_od(arms, T1, T2, lambda_init, lambda_thres, rng, instance, allocation_rule="xy")


def lasso_od_cv(
    arms: np.ndarray,
    T: int,
    rng: np.random.Generator,
    instance: BanditInstance,
    s: int,
    T1: Optional[int] = None,
    allocation_rule: AllocationRule = "g_optimal",
) -> AlgorithmOutcome:
    """Lasso-OD-CV: T1 = T/5 por padrão e lambdas da validação cruzada nos dados da fase 1."""
    settings = get_settings()
    if T1 is None:
        T1 = min(max(int(round(T * settings.cv_phase1_fraction)), 1), T - 1)
    T2 = T - T1
    if T1 < 1 or T2 < 1:
        raise InfeasibleBudget("T1 e T2 devem ser >= 1.")
    problem, allocation = collect_phase1(arms, T1, rng, instance)
    tuned = cv_tune(problem, s=s, rng=rng)
    estimate = estimate_support(problem, tuned.lambda_init, tuned.lambda_thres, allocation)
    phase2, fallback = _phase2_on_support(arms, estimate.support, T2, rng, instance, allocation_rule)
    return replace(
        phase2,
        phase1_budget=T1,
        phase2_budget=T2,
        support_found=estimate.support,
        fallback=fallback,
        details={
            "lambda_init": tuned.lambda_init,
            "lambda_thres": tuned.lambda_thres,
            "cv_loss": tuned.loss,
        },
    )


def analytical_setup(
    arms: np.ndarray,
    T: int,
    instance: BanditInstance,
    hardness_value: Optional[float] = None,
):
    """
    Hiperparâmetros analíticos a partir do desenho E-ótimo contínuo:
    b = 4 / phi^2(M, s) e x^2_max vêm dos pesos antes do arredondamento,
    pois T1 ainda não é conhecido.
    """
    settings = get_settings()
    design = e_optimal_design(
        arms, tol=settings.phase_design_tol, max_iters=settings.phase_design_max_iters,
    )
    m = gram(design, arms)
    if settings.compatibility_mode == "exact":
        phi = compatibility_constant_s(m, instance.s).value
    else:
        phi = sigma_min_lower_bound(m)
    if phi <= 0:
        raise RankDeficientArms("Constante de compatibilidade nula; b indefinido.")
    return analytical_hyperparameters(
        b=4.0 / phi,
        theta_min=instance.theta_min,
        s=instance.s,
        x_max_sq=x_max_sq(design.weights, arms),
        T=T,
        hardness_value=hardness_value,
    )


def popart_od(
    arms: np.ndarray,
    T: int,
    theta_min: float,
    s: int,
    rng: np.random.Generator,
    instance: BanditInstance,
) -> AlgorithmOutcome:
    """PopArt na fase 1 (T1 da divisão do PopArt) e OD-LinBAI no suporte estimado."""
    if T < 2:
        raise InfeasibleBudget("PopArt-OD requer T >= 2.")
    result = popart_estimate(arms, instance, T, theta_min, s, rng)
    cfg = result.config
    phase2, fallback = _phase2_on_support(arms, result.support, cfg.T2, rng, instance, "g_optimal")
    return replace(
        phase2,
        phase1_budget=cfg.T1,
        phase2_budget=cfg.T2,
        support_found=result.support,
        fallback=fallback,
        details={
            "H2_star": cfg.H2_star,
            "lambda_pa": cfg.lambda_pa,
            "c_pa": cfg.c_pa,
            "g": cfg.g,
        },
    )


def run_algorithm(
    name: str,
    arms: np.ndarray,
    T: int,
    rng: np.random.Generator,
    instance: BanditInstance,
    mode: str = "explicit",
    T1: Optional[int] = None,
    T1_fraction: Optional[float] = None,
    lambda_init: Optional[float] = None,
    lambda_thres: Optional[float] = None,
) -> AlgorithmOutcome:
    """Despacha pelo nome do algoritmo e modo de hiperparâmetros (CLI, API e benchmark)."""
    if name == "odlinbai":
        return od_linbai(arms, T, rng, instance)
    if name == "gse":
        return gse(arms, T, rng, instance)
    if name == "popart-od":
        return popart_od(arms, T, instance.theta_min, instance.s, rng, instance)
    if name not in ("lasso-od", "lasso-xy"):
        raise InvalidInstance(f"Algoritmo desconhecido: {name}.")

    rule: AllocationRule = "xy" if name == "lasso-xy" else "g_optimal"
    if T1 is None and T1_fraction is not None:
        T1 = min(max(int(round(T * T1_fraction)), 1), T - 1)
    if mode == "cv":
        return lasso_od_cv(arms, T, rng, instance, instance.s, T1=T1, allocation_rule=rule)
    if mode in ("analytical", "analytical-lb"):
        if mode == "analytical-lb":
            h = hardness_lower_bound_finite_set(arms, instance.s, instance.s + instance.s ** 2)
        elif get_settings().analytical_uses_hardness:
            h = summary_hardness(summarize(instance), instance.s + instance.s ** 2)
        else:
            h = None
        if h is not None and not math.isfinite(h):
            logger.warning("Cota de dificuldade infinita; usando H >= (s + s^2)/4.")
            h = None
        params = analytical_setup(arms, T, instance, hardness_value=h)
        outcome = lasso_od(
            arms, params.T1, params.T2, params.lambda_init, params.lambda_thres,
            rng, instance, allocation_rule=rule,
        )
        return replace(outcome, details={**outcome.details, "c0": params.c0, "kappa": params.kappa})
    if mode != "explicit":
        raise InvalidInstance(f"Modo de hiperparâmetros desconhecido: {mode}.")
    if T1 is None or lambda_init is None or lambda_thres is None:
        raise InvalidInstance("Modo explícito requer T1 (ou T1_fraction), lambda_init e lambda_thres.")
    return lasso_od(arms, T1, T - T1, lambda_init, lambda_thres, rng, instance, allocation_rule=rule)
