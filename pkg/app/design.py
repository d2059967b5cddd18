"""
Desenhos ótimos de alocação sobre o simplex de braços (E-ótimo, G-ótimo,
alocação XY e o desenho de diagonal mínima do PopArt) e o arredondamento
ROUND para contagens inteiras.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.optimize import linprog, minimize

from app.config import get_settings
from app.exceptions import (
    InfeasibleBudget,
    InvalidDistribution,
    InvalidInstance,
    RankDeficientArms,
)

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-9
# Suavização do autovalor mínimo: estágios e fator da temperatura por estágio.
SMOOTHING_STAGES = 8
SMOOTHING_GROWTH = 10.0
MAX_ACTIVE_TARGETS = 200
# Alvos mantidos no problema mestre do minimax de variâncias.
MAX_WORKING_TARGETS = 300
MASTER_RIDGE = 1e-12


@dataclass(frozen=True, eq=False)
class Allocation:
    """Distribuição sobre os braços e, após ROUND, as contagens inteiras."""

    weights: np.ndarray
    objective_value: float
    counts: Optional[np.ndarray] = None
    converged: bool = True
    degenerate: bool = False
    certificate_gap: float = 0.0
    iterations: int = 0

    def rounded(self, T: int) -> "Allocation":
        return replace(self, counts=round_allocation(self.weights, T))


def _as_arms(arms) -> np.ndarray:
    arr = np.asarray(arms, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise InvalidInstance("Braços devem formar uma matriz K x d com K >= 1.")
    return arr


def validate_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InvalidDistribution("Pesos devem ser um vetor não vazio.")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidDistribution("Pesos devem ser finitos e não negativos.")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidDistribution(f"Pesos somam {w.sum():.12g}, esperado 1.")
    return w


def gram(allocation, arms) -> np.ndarray:
    """M(nu) = sum_k nu_k a(k) a(k)^T, simetrizada."""
    w = allocation.weights if isinstance(allocation, Allocation) else np.asarray(allocation, dtype=np.float64)
    a = _as_arms(arms)
    if w.shape != (a.shape[0],):
        raise InvalidInstance(f"{w.shape[0]} pesos para {a.shape[0]} braços.")
    m = (a.T * w) @ a
    return 0.5 * (m + m.T)


def min_eigenvalue(weights, arms) -> float:
    return float(np.linalg.eigvalsh(gram(weights, arms))[0])


def _factor(m: np.ndarray):
    try:
        return cho_factor(m)
    except LinAlgError as exc:
        raise RankDeficientArms("Matriz de Gram singular para a alocação dada.") from exc


def variances(weights, arms, targets=None) -> np.ndarray:
    """y^T M(nu)^{-1} y para cada linha de targets (os próprios braços por padrão)."""
    a = _as_arms(arms)
    y = a if targets is None else _as_arms(targets)
    factor = _factor(gram(weights, a))
    return np.einsum("ij,ij->i", y, cho_solve(factor, y.T).T)


# ---------------------------------------------------------------------------
# E-ótimo
# ---------------------------------------------------------------------------

def _smoothed_min_eigenvalue(w: np.ndarray, a: np.ndarray, mu: float):
    """
    -(1/mu) log sum_i exp(-mu lambda_i(M(w))), seu gradiente em w e a
    projeção (v_i^T a_k)^2 dos braços nos autovetores.
    """
    vals, vecs = np.linalg.eigh(gram(w, a))
    p = np.exp(-mu * (vals - vals[0]))
    total = float(p.sum())
    proj = (a @ vecs) ** 2
    return vals[0] - math.log(total) / mu, proj @ (p / total), float(vals[0]), proj


def e_optimal_design(
    arms,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> Allocation:
    """
    Maximiza sigma_min(M(nu)) pela versão suavizada (soft-min dos
    autovalores) resolvida com SLSQP, aumentando a temperatura mu a cada
    estágio com partida no ótimo anterior.

    Certificado dual: para todo W >= 0 com tr W = 1, sigma_min(M(nu')) <=
    max_k a_k^T W a_k. W vem dos pesos softmax nos autovetores e do
    autovetor mínimo; converge quando esse limite fica a tol do melhor
    valor. Sem convergência, devolve o melhor iterado com converged=False.
    """
    settings = get_settings()
    tol = settings.design_tol if tol is None else tol
    max_iters = settings.design_max_iters if max_iters is None else max_iters
    a = _as_arms(arms)
    k, d = a.shape
    if not np.any(a):
        raise RankDeficientArms("Todos os braços são nulos.")
    if np.linalg.matrix_rank(a) < d:
        logger.warning("Braços geram posto < %d; sigma_min = 0 para toda alocação.", d)
        return Allocation(
            weights=np.full(k, 1.0 / k), objective_value=0.0, degenerate=True,
        )

    w = np.full(k, 1.0 / k)
    level = max(float(np.trace(gram(w, a))) / d, np.finfo(np.float64).tiny)
    mu = 10.0 * math.log(d + 1.0) / level
    best_w, best_val = w, -math.inf
    upper = math.inf
    converged = False
    it = 0
    simplex = [{"type": "eq", "fun": lambda x: x.sum() - 1.0, "jac": lambda x: np.ones(k)}]

    for stage in range(SMOOTHING_STAGES):
        cache: dict = {}

        def evaluate(x: np.ndarray):
            key = x.tobytes()
            if key not in cache:
                cache.clear()
                cache[key] = _smoothed_min_eigenvalue(np.clip(x, 0.0, None), a, mu)
            return cache[key]

        res = minimize(
            lambda x: -evaluate(x)[0] / level,
            w,
            jac=lambda x: -evaluate(x)[1] / level,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * k,
            constraints=simplex,
            options={"ftol": 1e-14, "maxiter": max(1, max_iters - it)},
        )
        it += max(int(res.nit), 1)
        cand = np.clip(res.x, 0.0, None)
        cand /= cand.sum()
        _, grad, low, proj = _smoothed_min_eigenvalue(cand, a, mu)
        upper = min(upper, float(grad.max()), float(proj[:, 0].max()))
        if low > best_val:
            best_val, best_w = low, cand
        w = cand
        logger.debug("E-ótimo: estágio %d, mu=%.3g, sigma_min=%.6g, gap=%.3g", stage, mu, low, upper - best_val)
        if upper - best_val <= tol:
            converged = True
            break
        if it >= max_iters:
            break
        mu *= SMOOTHING_GROWTH

    gap = max(upper - best_val, 0.0)
    if not converged:
        logger.warning("E-ótimo sem convergência após %d iterações (gap=%.3g).", it, gap)
    return Allocation(
        weights=best_w,
        objective_value=best_val,
        converged=converged,
        certificate_gap=gap,
        iterations=it,
    )


# ---------------------------------------------------------------------------
# G-ótimo (Fedorov-Wynn / Frank-Wolfe com passos de afastamento)
# ---------------------------------------------------------------------------

def _require_full_rank(a: np.ndarray) -> None:
    if np.linalg.matrix_rank(a) < a.shape[1]:
        raise RankDeficientArms(
            f"Braços não geram R^{a.shape[1]}; reduza a dimensão antes do desenho."
        )


def _arm_variances(w: np.ndarray, a: np.ndarray) -> np.ndarray:
    factor = _factor(gram(w, a))
    return np.einsum("ij,ij->i", a, cho_solve(factor, a.T).T)


def g_optimal_design(
    arms,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> Allocation:
    """
    Minimiza max_i ||a(i)||^2_{M(pi)^{-1}}. Pelo teorema de Kiefer-Wolfowitz
    o ótimo vale d; para quando max_i g_i <= d(1 + tol).
    """
    settings = get_settings()
    tol = settings.design_tol if tol is None else tol
    max_iters = settings.design_max_iters if max_iters is None else max_iters
    a = _as_arms(arms)
    k, d = a.shape
    _require_full_rank(a)

    w = np.full(k, 1.0 / k)
    g = _arm_variances(w, a)
    it = 0
    for it in range(1, max_iters + 1):
        j = int(np.argmax(g))
        g_max = float(g[j])
        if g_max <= d * (1.0 + tol):
            break
        on = np.flatnonzero(w > 0)
        i = int(on[np.argmin(g[on])])
        g_min = float(g[i])
        if g_max - d >= d - g_min or w[i] >= 1.0:
            gamma = (g_max - d) / (d * (g_max - 1.0))
            w = (1.0 - gamma) * w
            w[j] += gamma
        else:
            # passo de afastamento: retira massa do braço menos informativo
            limit = w[i] / (1.0 - w[i])
            gamma = limit if g_min <= 1.0 else min((d - g_min) / (d * (g_min - 1.0)), limit)
            w = (1.0 + gamma) * w
            w[i] -= gamma
            if gamma >= limit:
                w[i] = 0.0
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        g = _arm_variances(w, a)

    objective = float(np.max(g))
    converged = objective <= d * (1.0 + tol)
    if not converged:
        logger.warning("G-ótimo sem convergência após %d iterações.", it)
    return Allocation(
        weights=w,
        objective_value=objective,
        converged=converged,
        certificate_gap=objective / d - 1.0,
        iterations=it,
    )


# ---------------------------------------------------------------------------
# Minimax de variâncias sobre um conjunto de alvos (XY e PopArt)
# ---------------------------------------------------------------------------

def _target_lower_bound(values: np.ndarray, cross: np.ndarray) -> tuple[float, np.ndarray]:
    """
    Limite inferior max_lambda 2 lambda^T f - max_k sum_y lambda_y (y^T M^{-1} a_k)^2,
    obtido da convexidade de M -> y^T M^{-1} y; resolvido como LP.
    """
    n, k = cross.shape
    res = linprog(
        c=np.r_[-2.0 * values, 1.0],
        A_ub=np.hstack([cross.T, -np.ones((k, 1))]),
        b_ub=np.zeros(k),
        A_eq=np.r_[np.ones(n), 0.0][None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * n + [(None, None)],
        method="highs",
    )
    if res.status != 0:
        lam = np.zeros(n)
        lam[int(np.argmax(values))] = 1.0
        return -math.inf, lam
    lam = np.clip(res.x[:n], 0.0, None)
    return -float(res.fun), lam / lam.sum()


def _epigraph_master(a: np.ndarray, targets: np.ndarray, w0: np.ndarray, max_iters: int):
    """
    min t s.a. y^T M(w)^{-1} y <= t para os alvos dados, w no simplex.
    A derivada de y^T M^{-1} y em w_k é -(y^T M^{-1} a_k)^2.
    """
    k, d = a.shape
    n = targets.shape[0]
    eye = np.eye(d)
    cache: dict = {}

    def parts(z: np.ndarray):
        key = z.tobytes()
        if key not in cache:
            cache.clear()
            m = gram(np.clip(z[:k], 0.0, None), a)
            m += MASTER_RIDGE * max(float(np.trace(m)), 1.0) / d * eye
            solved = np.linalg.solve(m, targets.T).T
            cache[key] = (np.einsum("ij,ij->i", targets, solved), (solved @ a.T) ** 2)
        return cache[key]

    scale = float(parts(np.r_[w0, 0.0])[0].max())
    res = minimize(
        lambda z: z[k] / scale,
        np.r_[w0, scale],
        jac=lambda z: np.r_[np.zeros(k), 1.0 / scale],
        method="SLSQP",
        bounds=[(0.0, 1.0)] * k + [(0.0, None)],
        constraints=[
            {"type": "eq", "fun": lambda z: z[:k].sum() - 1.0,
             "jac": lambda z: np.r_[np.ones(k), 0.0]},
            {"type": "ineq", "fun": lambda z: (z[k] - parts(z)[0]) / scale,
             "jac": lambda z: np.hstack([parts(z)[1], np.ones((n, 1))]) / scale},
        ],
        options={"ftol": 1e-14, "maxiter": max(1, max_iters)},
    )
    w = np.clip(res.x[:k], 0.0, None)
    return w / w.sum(), int(res.nit)


def _minimax_variance_design(
    arms: np.ndarray,
    targets: np.ndarray,
    tol: float,
    max_iters: int,
    active_fraction: float = 0.05,
) -> Allocation:
    """
    Geração de restrições: resolve o mestre sobre o conjunto de trabalho,
    acrescenta os alvos quase ativos no novo ponto e repete até o limite
    inferior do LP dual ficar a tol (relativa) do melhor valor.
    """
    a = arms
    k = a.shape[0]
    w = np.full(k, 1.0 / k)
    best_w, best_val = w, math.inf
    best_lb = -math.inf
    previous = math.inf
    working = np.zeros(0, dtype=int)
    it = 0
    converged = False
    while True:
        solved = cho_solve(_factor(gram(w, a)), targets.T).T  # M^{-1} y
        values = np.einsum("ij,ij->i", targets, solved)
        f_max = float(values.max())
        if f_max < best_val:
            best_val, best_w = f_max, w
        active = np.flatnonzero(values >= (1.0 - active_fraction) * f_max)
        if active.size > MAX_ACTIVE_TARGETS:
            active = active[np.argsort(-values[active], kind="stable")[:MAX_ACTIVE_TARGETS]]
        lb, _ = _target_lower_bound(values[active], (solved[active] @ a.T) ** 2)
        best_lb = max(best_lb, lb)
        if best_val - best_lb <= tol * best_val:
            converged = True
            break
        if it >= max_iters:
            break

        merged = np.union1d(working, active)
        if merged.size > MAX_WORKING_TARGETS:
            merged = np.sort(merged[np.argsort(-values[merged], kind="stable")[:MAX_WORKING_TARGETS]])
        if np.array_equal(merged, working) and best_val >= previous * (1.0 - 1e-12):
            logger.debug("Minimax de variâncias estagnou com %d alvos.", working.size)
            break
        previous = best_val
        working = merged
        w, nit = _epigraph_master(a, targets[working], w, max_iters - it)
        it += max(nit, 1)

    values = variances(best_w, a, targets)
    objective = float(values.max())
    gap = max(objective - best_lb, 0.0) / objective
    converged = converged or gap <= tol
    if not converged:
        logger.warning("Desenho minimax sem convergência após %d iterações (gap=%.3g).", it, gap)
    return Allocation(
        weights=best_w,
        objective_value=objective,
        converged=converged,
        certificate_gap=gap,
        iterations=it,
    )


def difference_targets(arms) -> np.ndarray:
    """Diferenças a(i) - a(j), i < j, sem as nulas."""
    a = _as_arms(arms)
    i, j = np.triu_indices(a.shape[0], k=1)
    diffs = a[i] - a[j]
    return diffs[np.any(diffs != 0, axis=1)]


def xy_allocation(
    arms,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> Allocation:
    """Minimiza max_{y = a(i) - a(j)} ||y||^2_{M(pi)^{-1}} (alocação XY)."""
    settings = get_settings()
    tol = settings.design_tol if tol is None else tol
    max_iters = settings.design_max_iters if max_iters is None else max_iters
    a = _as_arms(arms)
    if a.shape[0] < 2:
        raise InvalidInstance("Alocação XY requer K >= 2.")
    _require_full_rank(a)
    targets = difference_targets(a)
    if targets.shape[0] == 0:
        raise RankDeficientArms("Conjunto de diferenças degenerado (braços idênticos).")
    return _minimax_variance_design(a, targets, tol, max_iters)


def popart_design(
    arms,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> Allocation:
    """min_nu max_i (M(nu)^{-1})_ii; objective_value é H2_star."""
    settings = get_settings()
    tol = settings.design_tol if tol is None else tol
    max_iters = settings.design_max_iters if max_iters is None else max_iters
    a = _as_arms(arms)
    _require_full_rank(a)
    return _minimax_variance_design(a, np.eye(a.shape[1]), tol, max_iters)


# ---------------------------------------------------------------------------
# ROUND
# ---------------------------------------------------------------------------

def round_allocation(weights, T: int) -> np.ndarray:
    """
    Arredondamento eficiente: T_i = ceil((T - K/2) pi_i) e ajuste unitário
    por argmin T_i/pi_i (incremento) ou argmax (T_i - 1)/pi_i (decremento).
    Empates vão para o menor índice; braços de peso zero ficam com zero.
    """
    w = validate_weights(weights)
    if int(T) != T or T < 1:
        raise InfeasibleBudget(f"Orçamento T={T} deve ser inteiro >= 1.")
    T = int(T)
    k = w.shape[0]
    positive = w > 0
    counts = np.ceil((T - k / 2.0) * w - 1e-9).astype(np.int64)
    counts = np.clip(counts, 0, None)
    safe = np.where(positive, w, 1.0)
    total = int(counts.sum())
    while total < T:
        ratio = np.where(positive, counts / safe, math.inf)
        counts[int(np.argmin(ratio))] += 1
        total += 1
    while total > T:
        ratio = np.where(
            positive,
            (counts - 1) / safe,
            np.where(counts >= 1, math.inf, -math.inf),
        )
        counts[int(np.argmax(ratio))] -= 1
        total -= 1
    return counts
