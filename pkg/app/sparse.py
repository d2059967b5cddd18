"""
Estimação esparsa: Lasso por ADMM, limiarização, constante de
compatibilidade, estimador de Catoni e o estimador PopArt.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import brentq, minimize

from app.bandit import BanditInstance, pulls_from_counts, sample_rewards
from app.config import get_settings
from app.design import Allocation, e_optimal_design, popart_design
from app.exceptions import EnumerationLimitExceeded, InvalidInstance

logger = logging.getLogger(__name__)

MAX_SUBSET_SIZE = 8
MAX_ENUM_DIMENSION = 20
MAX_ENUM_SPARSITY = 4
# Acima deste módulo x^2 estoura em float64; psi usa a forma fatorada.
PSI_SPLIT = 1e150


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """y = X theta* + eps, com as linhas de X sendo os braços puxados."""

    design: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.design, dtype=np.float64))
        y = np.asarray(self.responses, dtype=np.float64).ravel()
        if x.shape[0] != y.shape[0]:
            raise InvalidInstance(f"X tem {x.shape[0]} linhas e y tem {y.shape[0]} entradas.")
        if x.shape[0] == 0:
            raise InvalidInstance("Problema de regressão sem amostras.")
        object.__setattr__(self, "design", x)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def dimension(self) -> int:
        return self.design.shape[1]

    def subset(self, rows: np.ndarray) -> "RegressionProblem":
        return RegressionProblem(self.design[rows], self.responses[rows])


@dataclass(frozen=True, eq=False)
class LassoFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    kkt_residual: float


@dataclass(frozen=True, eq=False)
class SparseEstimate:
    """Estimativa limiarizada; initial guarda theta_init quando disponível."""

    coefficients: np.ndarray
    support: np.ndarray
    lambda_init: Optional[float]
    lambda_thres: float
    initial: Optional[np.ndarray] = None
    allocation: Optional[Allocation] = None
    converged: bool = True


def soft_threshold(x: np.ndarray, kappa: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)


def lasso_objective(problem: RegressionProblem, theta: np.ndarray, lambda_init: float) -> float:
    r = problem.responses - problem.design @ theta
    return float(r @ r / problem.n + lambda_init * np.abs(theta).sum())


def _kkt_residual(q_mat, q_vec, theta, half_lambda) -> float:
    grad = q_mat @ theta - q_vec
    active = theta != 0
    res = np.where(
        active,
        np.abs(grad + half_lambda * np.sign(theta)),
        np.maximum(np.abs(grad) - half_lambda, 0.0),
    )
    return float(res.max()) if res.size else 0.0


def lasso(
    problem: RegressionProblem,
    lambda_init: float,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    rho: Optional[float] = None,
    warm_start: Optional[np.ndarray] = None,
) -> LassoFit:
    """
    argmin (1/n)||y - X theta||^2 + lambda ||theta||_1 por ADMM.

    Resolve a forma equivalente 1/2 theta^T Q theta - q^T theta + (lambda/2)||theta||_1
    com Q = X^T X / n; o fator de Q + rho I é calculado uma vez.
    A parada usa o resíduo KKT do iterado esparso z.
    """
    if lambda_init <= 0:
        raise InvalidInstance("lambda_init deve ser positivo.")
    settings = get_settings()
    tol = settings.lasso_tol if tol is None else tol
    max_iters = settings.lasso_max_iters if max_iters is None else max_iters
    rho = settings.lasso_rho if rho is None else rho

    x_mat, y = problem.design, problem.responses
    n, d = x_mat.shape
    q_mat = x_mat.T @ x_mat / n
    q_vec = x_mat.T @ y / n
    half_lambda = 0.5 * lambda_init
    factor = cho_factor(q_mat + rho * np.eye(d))

    z = np.zeros(d) if warm_start is None else np.asarray(warm_start, dtype=np.float64).copy()
    u = np.zeros(d)
    kkt = _kkt_residual(q_mat, q_vec, z, half_lambda)
    it = 0
    while kkt > tol and it < max_iters:
        it += 1
        x = cho_solve(factor, q_vec + rho * (z - u))
        z = soft_threshold(x + u, half_lambda / rho)
        u += x - z
        kkt = _kkt_residual(q_mat, q_vec, z, half_lambda)

    converged = kkt <= tol
    if not converged:
        logger.warning("Lasso sem convergência após %d iterações (KKT=%.3g).", it, kkt)
    return LassoFit(coefficients=z, converged=converged, iterations=it, kkt_residual=kkt)


def threshold(
    theta_init: np.ndarray,
    lambda_thres: float,
    lambda_init: Optional[float] = None,
) -> SparseEstimate:
    """Mantém a coordenada j se |theta_init_j| >= lambda_thres (inclusivo)."""
    if lambda_thres <= 0:
        raise InvalidInstance("lambda_thres deve ser positivo.")
    theta = np.asarray(theta_init, dtype=np.float64)
    keep = np.abs(theta) >= lambda_thres
    coefficients = np.where(keep, theta, 0.0)
    return SparseEstimate(
        coefficients=coefficients,
        support=np.flatnonzero(coefficients),
        lambda_init=lambda_init,
        lambda_thres=lambda_thres,
        initial=theta,
    )


def collect_phase1(
    arms: np.ndarray,
    T1: int,
    rng: np.random.Generator,
    instance: BanditInstance,
) -> tuple[RegressionProblem, Allocation]:
    """Puxa a alocação E-ótima arredondada para T1 e devolve (X, y) e a alocação."""
    settings = get_settings()
    design = e_optimal_design(
        arms, tol=settings.phase_design_tol, max_iters=settings.phase_design_max_iters,
    )
    allocation = design.rounded(T1)
    pulls = pulls_from_counts(allocation.counts)
    rewards = sample_rewards(instance, pulls, rng)
    return RegressionProblem(np.asarray(arms)[pulls], rewards), allocation


def thresholded_lasso_phase(
    arms: np.ndarray,
    T1: int,
    lambda_init: float,
    lambda_thres: float,
    rng: np.random.Generator,
    instance: BanditInstance,
) -> SparseEstimate:
    """Fase 1 (TL): E-ótimo, ROUND, puxadas, Lasso e limiarização."""
    problem, allocation = collect_phase1(arms, T1, rng, instance)
    return estimate_support(problem, lambda_init, lambda_thres, allocation)


def estimate_support(
    problem: RegressionProblem,
    lambda_init: float,
    lambda_thres: float,
    allocation: Optional[Allocation] = None,
) -> SparseEstimate:
    fit = lasso(problem, lambda_init)
    estimate = threshold(fit.coefficients, lambda_thres, lambda_init=lambda_init)
    return replace(estimate, allocation=allocation, converged=fit.converged)


def universal_lambda(problem: RegressionProblem, sigma: float = 1.0, delta: float = 0.01) -> float:
    """sigma * sqrt(2 x^2 log(2d/delta) / n), com x^2 = max_j ||X_{:,j}||^2 / n."""
    n, d = problem.design.shape
    x_sq = float(np.max(np.sum(problem.design ** 2, axis=0)) / n)
    return sigma * math.sqrt(2.0 * x_sq * math.log(2.0 * d / delta) / n)


# ---------------------------------------------------------------------------
# Constante de compatibilidade
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompatibilityBound:
    value: float
    exact: bool
    subset: Optional[tuple[int, ...]] = None


def _sign_pattern_qp(m: np.ndarray, subset: np.ndarray, rest: np.ndarray, signs: np.ndarray) -> float:
    """
    min |S| theta^T M theta com theta_S = signs * v, v >= 0, sum v = 1,
    theta_{S^c} = p - q, p, q >= 0, sum(p + q) <= 3.
    """
    s, r = subset.size, rest.size
    d = m.shape[0]
    basis = np.zeros((d, s + 2 * r))
    basis[subset, np.arange(s)] = signs
    basis[rest, s + np.arange(r)] = 1.0
    basis[rest, s + r + np.arange(r)] = -1.0
    h = s * (basis.T @ m @ basis)
    h = 0.5 * (h + h.T)
    start = np.r_[np.full(s, 1.0 / s), np.zeros(2 * r)]
    constraints = [
        {"type": "eq", "fun": lambda z: z[:s].sum() - 1.0,
         "jac": lambda z: np.r_[np.ones(s), np.zeros(2 * r)]},
    ]
    if r:
        constraints.append(
            {"type": "ineq", "fun": lambda z: 3.0 - z[s:].sum(),
             "jac": lambda z: np.r_[np.zeros(s), -np.ones(2 * r)]}
        )
    res = minimize(
        lambda z: float(z @ h @ z),
        start,
        jac=lambda z: 2.0 * h @ z,
        method="SLSQP",
        bounds=[(0.0, None)] * (s + 2 * r),
        constraints=constraints,
        options={"ftol": 1e-12, "maxiter": 500},
    )
    return max(float(res.fun), 0.0)


def compatibility_constant(m, subset: Sequence[int]) -> float:
    """
    phi^2(M, S) = min |S| theta^T M theta sobre o cone
    ||theta_{S^c}||_1 <= 3 ||theta_S||_1 com ||theta_S||_1 = 1, enumerando
    os padrões de sinal de theta_S (cada um é um QP convexo).
    """
    m = np.asarray(m, dtype=np.float64)
    d = m.shape[0]
    subset = np.unique(np.asarray(subset, dtype=int))
    if subset.size < 1:
        raise InvalidInstance("Subconjunto S deve ser não vazio.")
    if subset.min() < 0 or subset.max() >= d:
        raise InvalidInstance(f"Índices de S fora de [0, {d}).")
    if subset.size > MAX_SUBSET_SIZE:
        raise EnumerationLimitExceeded(f"|S|={subset.size} excede {MAX_SUBSET_SIZE}.")
    rest = np.setdiff1d(np.arange(d), subset)
    best = math.inf
    # theta e -theta têm o mesmo valor: fixa o primeiro sinal
    for tail in itertools.product((1.0, -1.0), repeat=subset.size - 1):
        signs = np.r_[1.0, tail]
        best = min(best, _sign_pattern_qp(m, subset, rest, signs))
    return best


def compatibility_constant_s(m, s: int) -> CompatibilityBound:
    """phi^2(M, s) = min_{|S| = s} phi^2(M, S); acima dos limites usa sigma_min(M)."""
    m = np.asarray(m, dtype=np.float64)
    d = m.shape[0]
    if not 1 <= s <= d:
        raise InvalidInstance(f"s={s} fora de [1, {d}].")
    if d > MAX_ENUM_DIMENSION or s > MAX_ENUM_SPARSITY:
        logger.warning(
            "Enumeração de phi^2 inviável (d=%d, s=%d); usando sigma_min(M).", d, s,
        )
        return CompatibilityBound(value=sigma_min_lower_bound(m), exact=False)
    best, arg = math.inf, None
    for subset in itertools.combinations(range(d), s):
        value = compatibility_constant(m, subset)
        if value < best:
            best, arg = value, subset
    return CompatibilityBound(value=best, exact=True, subset=arg)


def sigma_min_lower_bound(m) -> float:
    """phi^2(M, S) >= sigma_min(M) para todo S."""
    return max(float(np.linalg.eigvalsh(np.asarray(m, dtype=np.float64))[0]), 0.0)


# ---------------------------------------------------------------------------
# Catoni e PopArt
# ---------------------------------------------------------------------------

def catoni_psi(x):
    """sign(x) log(1 + |x| + x^2/2), avaliada sem overflow para |x| grande."""
    x = np.asarray(x, dtype=np.float64)
    ax = np.minimum(np.abs(x), np.finfo(np.float64).max)
    big = ax > PSI_SPLIT
    small = np.where(big, 0.0, ax)
    large = np.where(big, ax, 1.0)
    value = np.where(
        big,
        2.0 * np.log(large) + np.log(0.5 + 1.0 / large + (1.0 / large) ** 2),
        np.log1p(small + 0.5 * small * small),
    )
    return np.sign(x) * value


def catoni(samples, alpha: float) -> float:
    """Raiz y de sum_i psi(alpha (Z_i - y)) = 0; psi é crescente, a raiz é única."""
    z = np.asarray(samples, dtype=np.float64).ravel()
    if alpha <= 0:
        raise InvalidInstance("alpha deve ser positivo.")
    if z.size == 0:
        raise InvalidInstance("Catoni requer ao menos uma amostra.")
    if not np.all(np.isfinite(z)):
        raise InvalidInstance("Catoni requer amostras finitas.")
    lo, hi = float(z.min()), float(z.max())
    if lo == hi:
        return lo

    def score(y: float) -> float:
        with np.errstate(over="ignore"):
            return float(catoni_psi(alpha * (z - y)).sum())

    return float(brentq(score, lo, hi, xtol=1e-10, maxiter=2000))


@dataclass(frozen=True, eq=False)
class PopArtConfig:
    nu_star: Allocation
    H2_star: float
    lambda_pa: float
    c_pa: float
    g: float
    T1: int
    T2: int


@dataclass(frozen=True, eq=False)
class PopArtResult:
    theta_prime: np.ndarray
    support: np.ndarray
    config: PopArtConfig
    coefficients: np.ndarray = field(repr=False, default=None)


def popart_constants(H2_star: float, theta_min: float, s: int, T: int) -> dict:
    """
    lambda_PA = min(sqrt(2 H), theta_min / 2), c_PA = 2H / (lambda^2 s log2 s),
    T1 = ceil(T c/(1 + c)) em [1, T - 1] e g = lambda^2 / (8H).
    log2 s é limitado por baixo por 1 (s = 1).
    """
    if H2_star <= 0 or theta_min <= 0 or s < 1:
        raise InvalidInstance("H2_star, theta_min e s devem ser positivos.")
    lam = min(math.sqrt(2.0 * H2_star), theta_min / 2.0)
    c_pa = 2.0 * H2_star / (lam ** 2 * s * max(math.log2(s), 1.0))
    t1 = math.ceil(T * c_pa / (1.0 + c_pa) - 1e-9)
    t1 = min(max(t1, 1), T - 1) if T >= 2 else T
    return {
        "lambda_pa": lam,
        "c_pa": c_pa,
        "g": lam ** 2 / (8.0 * H2_star),
        "T1": t1,
        "T2": T - t1,
    }


def popart_estimate(
    arms: np.ndarray,
    instance: BanditInstance,
    total_T: int,
    theta_min: float,
    s: int,
    rng: np.random.Generator,
) -> PopArtResult:
    """
    Desenho de diagonal mínima, T1 braços i.i.d. de nu*, estimativas de uma
    amostra M^{-1} a(A_t) y_t, agregação Catoni por coordenada e limiar
    sqrt(8 (M^{-1})_ii g). Usa a covariância populacional M de nu*.
    """
    settings = get_settings()
    a = np.asarray(arms, dtype=np.float64)
    nu = popart_design(a, tol=settings.phase_design_tol, max_iters=settings.phase_design_max_iters)
    consts = popart_constants(nu.objective_value, theta_min, s, total_T)
    config = PopArtConfig(nu_star=nu, H2_star=nu.objective_value, **consts)

    m_inv = np.linalg.inv((a.T * nu.weights) @ a)
    m_inv = 0.5 * (m_inv + m_inv.T)
    pulls = rng.choice(a.shape[0], size=config.T1, p=nu.weights)
    rewards = sample_rewards(instance, pulls, rng)
    one_sample = (a[pulls] @ m_inv) * rewards[:, None]  # T1 x d

    diag = np.diag(m_inv)
    g = config.g
    alphas = np.sqrt(g / (diag * (1.0 + 2.0 * g / (1.0 - 2.0 * g))))
    theta_prime = np.array([catoni(one_sample[:, i], alphas[i]) for i in range(a.shape[1])])
    keep = np.abs(theta_prime) >= np.sqrt(8.0 * diag * g)
    coefficients = np.where(keep, theta_prime, 0.0)
    return PopArtResult(
        theta_prime=theta_prime,
        support=np.flatnonzero(coefficients),
        config=config,
        coefficients=coefficients,
    )
