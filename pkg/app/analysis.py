"""
Limites teóricos de probabilidade de erro, hiperparâmetros analíticos do
Lasso-OD e ajuste de (lambda_init, lambda_thres) por validação cruzada.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, computed_field, model_validator

from app.bandit import InstanceSummary, hardness, summarize_means
from app.config import get_settings
from app.exceptions import (
    CrossValidationError,
    EnumerationLimitExceeded,
    InvalidInstance,
    NonUniqueBestArm,
)
from app.sparse import RegressionProblem, lasso, threshold

logger = logging.getLogger(__name__)

HYPOTHESIS_RTOL = 1e-12
MAX_FINITE_SET = 1_000_000


@dataclass(frozen=True)
class BoundValue:
    """Valor de um limite: probability é o valor recortado em [0, 1]."""

    probability: float
    raw: float
    exponent: Optional[float] = None
    prefactor: Optional[float] = None
    vacuous: bool = False
    note: str = ""
    terms: tuple["BoundValue", ...] = field(default=())

    def to_dict(self) -> dict:
        out = {
            "probability": self.probability,
            "raw": self.raw,
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "vacuous": self.vacuous,
            "note": self.note,
        }
        if self.terms:
            out["terms"] = [t.to_dict() for t in self.terms]
        return out


def _exp_bound(prefactor: float, exponent: float, note: str = "") -> BoundValue:
    raw = prefactor * math.exp(-exponent)
    return BoundValue(
        probability=min(1.0, max(0.0, raw)),
        raw=raw,
        exponent=exponent,
        prefactor=prefactor,
        vacuous=raw >= 1.0,
        note=note,
    )


def _vacuous(note: str) -> BoundValue:
    return BoundValue(probability=1.0, raw=1.0, vacuous=True, note=note)


def _log2_at_least_one(x: float) -> float:
    return max(math.log2(x), 1.0) if x > 0 else 1.0


def _positive(**values) -> None:
    for name, value in values.items():
        if value is None or value <= 0:
            raise InvalidInstance(f"{name} deve ser positivo (recebeu {value}).")


# ---------------------------------------------------------------------------
# Limites
# ---------------------------------------------------------------------------

def bound_support_recovery(T1: int, lambda_init: float, d: int, x_max_sq: float) -> BoundValue:
    """Suporte: 2d exp(-T1 lambda^2 / (32 x^2_max))."""
    _positive(T1=T1, d=d, x_max_sq=x_max_sq)
    if lambda_init < 0:
        raise InvalidInstance("lambda_init deve ser não negativo.")
    if lambda_init == 0:
        return _vacuous("lambda_init = 0")
    return _exp_bound(2.0 * d, T1 * lambda_init ** 2 / (32.0 * x_max_sq))


def od_linbai_rounds(d: int) -> int:
    """ceil(log2 d), no mínimo 1."""
    return max(1, (int(d) - 1).bit_length())


def bound_od_linbai(K: int, d: int, T: int, hardness_d: float) -> BoundValue:
    """OD-LinBAI: (K + log2 d) exp(-T~ / (16 (1 + d^2/T~) H2(d)))."""
    _positive(K=K, d=d, T=T, hardness_d=hardness_d)
    t_tilde = T // od_linbai_rounds(d)
    if t_tilde == 0:
        return _vacuous("T < ceil(log2 d)")
    exponent = t_tilde / (16.0 * (1.0 + d ** 2 / t_tilde) * hardness_d)
    return _exp_bound(K + math.log2(d), exponent)


class TheoryInputs(BaseModel):
    """Entradas dos limites do Lasso-OD; c, s1, T2 e epsilon são derivados."""

    K: int = Field(ge=1)
    d: int = Field(ge=1)
    s: int = Field(ge=1)
    T: int = Field(ge=2)
    T1: Optional[int] = Field(default=None, ge=1)
    lambda_init: Optional[float] = Field(default=None, gt=0)
    lambda_thres: Optional[float] = Field(default=None, gt=0)
    theta_min: float = Field(gt=0)
    b: Optional[float] = None
    x_max_sq: float = Field(default=1.0, gt=0)
    c0: Optional[float] = Field(default=None, gt=0)
    c_pa: Optional[float] = Field(default=None, gt=0)
    hardness_d: Optional[float] = Field(default=None, gt=0)
    hardness_s: Optional[float] = Field(default=None, gt=0)
    hardness_s1: Optional[float] = Field(default=None, gt=0)
    hardness_ss: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.s > self.d:
            raise ValueError("s deve ser <= d.")
        if self.T1 is not None and self.T1 >= self.T:
            raise ValueError("T1 deve ser < T.")
        return self

    @computed_field
    @property
    def c(self) -> Optional[float]:
        if self.lambda_init is None or self.lambda_thres is None:
            return None
        return self.lambda_thres / self.lambda_init

    @computed_field
    @property
    def s1(self) -> Optional[int]:
        if self.c is None or self.b is None or self.b <= 0:
            return None
        return int(math.floor(self.s * (1.0 + self.b / self.c) + 1e-9))

    @computed_field
    @property
    def T2(self) -> Optional[int]:
        return None if self.T1 is None else self.T - self.T1

    @computed_field
    @property
    def epsilon(self) -> Optional[float]:
        if self.s1 is None or self.T2 is None:
            return None
        return self.s1 ** 2 / self.T2

    def hypothesis_holds(self) -> bool:
        """theta_min >= lambda_init (c + b s) e b > 0."""
        if self.b is None or self.b <= 0 or self.c is None:
            return False
        need = self.lambda_init * (self.c + self.b * self.s)
        return self.theta_min >= need * (1.0 - HYPOTHESIS_RTOL)


def bound_lasso_od(inputs: TheoryInputs, hardness_s1: Optional[float] = None) -> BoundValue:
    """Lasso-OD: termo da fase 2 (OD-LinBAI em s1 dimensões) + termo da fase 1."""
    h = hardness_s1 if hardness_s1 is not None else inputs.hardness_s1
    if inputs.T1 is None or inputs.lambda_init is None or inputs.lambda_thres is None:
        raise InvalidInstance("O limite do Lasso-OD requer T1, lambda_init e lambda_thres.")
    if not inputs.hypothesis_holds():
        return _vacuous("hipótese theta_min >= lambda_init (c + b s) com b > 0 violada")
    if h is None or h <= 0:
        raise InvalidInstance("O limite do Lasso-OD requer H2(s1) > 0.")
    s1 = inputs.s1
    phase2 = _exp_bound(
        inputs.K + math.log2(inputs.d),
        math.floor(inputs.T2 / _log2_at_least_one(s1)) / (16.0 * (1.0 + inputs.epsilon) * h),
        note="fase 2",
    )
    phase1 = bound_support_recovery(inputs.T1, inputs.lambda_init, inputs.d, inputs.x_max_sq)
    phase1 = replace(phase1, note="fase 1")
    raw = phase2.probability + phase1.probability
    return BoundValue(
        probability=min(1.0, raw),
        raw=raw,
        vacuous=raw >= 1.0,
        note=f"s1={s1}",
        terms=(phase2, phase1),
    )


def bound_lasso_od_analytical(K: int, d: int, s: int, T: int, c0: float, hardness_value: float) -> BoundValue:
    """(K + log2 d + 2d) exp(-T / (16 floor(log2(s+s^2)) (1+eps) H (1+c0)))."""
    _positive(K=K, d=d, s=s, T=T, c0=c0, hardness=hardness_value)
    s1 = s + s * s
    eps = (1.0 + c0) * s1 ** 2 / T
    exponent = T / (16.0 * math.floor(math.log2(s1)) * (1.0 + eps) * hardness_value * (1.0 + c0))
    return _exp_bound(K + math.log2(d) + 2.0 * d, exponent, note=f"epsilon={eps:.6g}")


def bound_popart_od(K: int, d: int, s: int, T: int, c_pa: float, hardness_s: float) -> BoundValue:
    """PopArt-OD: (K + log2 d + 2d) exp(-T / (16 floor(log2 s) (1+eps) H(s) (1+c_PA)))."""
    _positive(K=K, d=d, s=s, T=T, c_pa=c_pa, hardness=hardness_s)
    eps = (1.0 + c_pa) * s ** 2 / T
    log_factor = max(math.floor(math.log2(s)), 1)
    exponent = T / (16.0 * log_factor * (1.0 + eps) * hardness_s * (1.0 + c_pa))
    return _exp_bound(K + math.log2(d) + 2.0 * d, exponent, note=f"epsilon={eps:.6g}")


def evaluate_bounds(inputs: TheoryInputs) -> dict[str, BoundValue]:
    """Todos os limites cujas entradas estão presentes."""
    out: dict[str, BoundValue] = {}
    if inputs.T1 is not None and inputs.lambda_init is not None:
        out["support"] = bound_support_recovery(inputs.T1, inputs.lambda_init, inputs.d, inputs.x_max_sq)
    if inputs.hardness_d is not None:
        out["odlinbai"] = bound_od_linbai(inputs.K, inputs.d, inputs.T, inputs.hardness_d)
    if (
        inputs.T1 is not None and inputs.lambda_init is not None
        and inputs.lambda_thres is not None and inputs.hardness_s1 is not None
    ):
        out["lasso_od"] = bound_lasso_od(inputs)
    if inputs.c0 is not None and inputs.hardness_ss is not None:
        out["lasso_od_analytical"] = bound_lasso_od_analytical(
            inputs.K, inputs.d, inputs.s, inputs.T, inputs.c0, inputs.hardness_ss,
        )
    if inputs.c_pa is not None and inputs.hardness_s is not None:
        out["popart_od"] = bound_popart_od(
            inputs.K, inputs.d, inputs.s, inputs.T, inputs.c_pa, inputs.hardness_s,
        )
    return out


# ---------------------------------------------------------------------------
# Hiperparâmetros analíticos
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticalHyperparameters:
    kappa: float
    lambda_init: float
    lambda_thres: float
    c0: float
    T1: int
    T2: int
    s1: int
    hypothesis_holds: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def split_budget(T: int, c0: float) -> tuple[int, int]:
    """T1 = T c0 / (1 + c0) arredondado ao inteiro mais próximo, em [1, T-1]."""
    t1 = int(math.floor(T * c0 / (1.0 + c0) + 0.5))
    t1 = min(max(t1, 1), T - 1)
    return t1, T - t1


def analytical_hyperparameters(
    b: float,
    theta_min: float,
    s: int,
    x_max_sq: float,
    T: int,
    hardness_value: Optional[float] = None,
) -> AnalyticalHyperparameters:
    """
    kappa = (b/theta_min)^2 max(25/24, (s + 1/s)^2 / (s + s^2)),
    lambda_init = 1/sqrt(kappa (s + s^2)), lambda_thres = (b/s) lambda_init,
    o que dá s1 = s + s^2 e theta_min >= lambda_init (c + b s).

    Sem hardness_value, c0 = 8 x^2 kappa / log2(s1) (cota H >= s1/4);
    com ele, c0 = 2 x^2 kappa s1 / (H log2 s1) iguala os dois expoentes.
    """
    _positive(b=b, theta_min=theta_min, s=s, x_max_sq=x_max_sq, T=T)
    if T < 2:
        raise InvalidInstance("T deve ser >= 2 para dividir o orçamento.")
    s1 = s + s * s
    factor = max(25.0 / 24.0, (s + 1.0 / s) ** 2 / s1)
    if factor > 25.0 / 24.0:
        logger.warning("kappa ajustado para s=%d: fator %.6g no lugar de 25/24.", s, factor)
    kappa = (b / theta_min) ** 2 * factor
    lambda_init = 1.0 / math.sqrt(kappa * s1)
    lambda_thres = (b / s) * lambda_init
    log_s1 = math.log2(s1)
    if hardness_value is None:
        c0 = 8.0 * x_max_sq * kappa / log_s1
    else:
        _positive(hardness=hardness_value)
        c0 = 2.0 * x_max_sq * kappa * s1 / (hardness_value * log_s1)
    t1, t2 = split_budget(T, c0)
    c = lambda_thres / lambda_init
    holds = theta_min >= lambda_init * (c + b * s) * (1.0 - HYPOTHESIS_RTOL)
    return AnalyticalHyperparameters(
        kappa=kappa,
        lambda_init=lambda_init,
        lambda_thres=lambda_thres,
        c0=c0,
        T1=t1,
        T2=t2,
        s1=int(math.floor(s * (1.0 + b / c) + 1e-9)),
        hypothesis_holds=holds,
    )


def x_max_sq(weights, arms) -> float:
    """max_j sum_k nu_k a(k)_j^2 para a alocação (arredondada) nu."""
    a = np.asarray(arms, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    return float(np.max(w @ (a * a)))


def x_max_sq_relaxed(arms) -> float:
    """max_k ||a(k)||_inf^2, independente da alocação."""
    return float(np.max(np.abs(np.asarray(arms, dtype=np.float64))) ** 2)


def hardness_lower_bound_finite_set(arms, s: int, m: int) -> float:
    """
    min de H2(m) sobre theta com s entradas +-1/sqrt(s) e o resto zero.
    Parâmetros com melhor braço empatado são ignorados.
    """
    a = np.asarray(arms, dtype=np.float64)
    k, d = a.shape
    if not 1 <= s <= d:
        raise InvalidInstance(f"s={s} fora de [1, {d}].")
    if math.comb(d, s) * 2 ** s > MAX_FINITE_SET:
        raise EnumerationLimitExceeded("Conjunto finito de parâmetros grande demais.")
    m = min(m, k)
    best = math.inf
    scale = 1.0 / math.sqrt(s)
    for subset in itertools.combinations(range(d), s):
        block = a[:, subset] * scale
        for signs in itertools.product((1.0, -1.0), repeat=s):
            try:
                summary = summarize_means(block @ np.asarray(signs))
            except NonUniqueBestArm:
                continue
            best = min(best, hardness(summary, m))
    return best


# ---------------------------------------------------------------------------
# Validação cruzada
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TunedLambdas:
    lambda_init: float
    lambda_thres: float
    loss: float
    evaluations: int


def default_grid() -> np.ndarray:
    settings = get_settings()
    return np.geomspace(settings.cv_grid_min, settings.cv_grid_max, settings.cv_grid_points)


def _narrow(grid: np.ndarray, center: float) -> np.ndarray:
    """Grade geométrica com metade da largura logarítmica, centrada no incumbente."""
    if grid.size < 2:
        return grid
    half = 0.25 * math.log(grid[-1] / grid[0])
    return np.geomspace(center * math.exp(-half), center * math.exp(half), grid.size)


def cv_tune(
    problem: RegressionProblem,
    init_grid: Optional[Sequence[float]] = None,
    thres_grid: Optional[Sequence[float]] = None,
    s: int = 1,
    c1: Optional[float] = None,
    c2: Optional[float] = None,
    folds: Optional[int] = None,
    mc_repeats: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    rounds: Optional[int] = None,
) -> TunedLambdas:
    """
    Busca coordenada em (lambda_init, lambda_thres) minimizando
    MSE fora do fold + c1 freq(||theta||_0 < s) + c2 media(1{||theta||_0 > s} ||theta||_0),
    com partições repetidas e estreitamento geométrico das grades.
    """
    settings = get_settings()
    c1 = settings.cv_c1 if c1 is None else c1
    c2 = settings.cv_c2 if c2 is None else c2
    folds = settings.cv_folds if folds is None else folds
    mc_repeats = settings.cv_repeats if mc_repeats is None else mc_repeats
    rounds = settings.cv_rounds if rounds is None else rounds
    rng = rng or np.random.default_rng(settings.default_seed)
    grid_i = np.sort(np.asarray(default_grid() if init_grid is None else init_grid, dtype=np.float64))
    grid_t = np.sort(np.asarray(default_grid() if thres_grid is None else thres_grid, dtype=np.float64))
    if grid_i.size == 0 or grid_t.size == 0:
        raise CrossValidationError("Grades de lambda não podem ser vazias.")
    if np.any(grid_i <= 0) or np.any(grid_t <= 0):
        raise CrossValidationError("Valores de lambda devem ser positivos.")
    if folds < 2 or mc_repeats < 1:
        raise CrossValidationError("São necessários folds >= 2 e mc_repeats >= 1.")

    splits = []
    for _ in range(mc_repeats):
        parts = np.array_split(rng.permutation(problem.n), folds)
        if any(p.size == 0 for p in parts):
            raise CrossValidationError(f"n={problem.n} amostras não cobrem {folds} folds.")
        splits.append(parts)

    fits: dict[tuple[int, int, float], np.ndarray] = {}

    def fitted(rep: int, fold: int, lam: float) -> np.ndarray:
        key = (rep, fold, lam)
        if key not in fits:
            train = np.concatenate([p for j, p in enumerate(splits[rep]) if j != fold])
            fits[key] = lasso(problem.subset(train), lam).coefficients
        return fits[key]

    evaluations = 0

    def loss(lam_i: float, lam_t: float) -> float:
        nonlocal evaluations
        evaluations += 1
        mse, under, over = [], [], []
        for rep, parts in enumerate(splits):
            for fold, test in enumerate(parts):
                theta = threshold(fitted(rep, fold, lam_i), lam_t).coefficients
                resid = problem.responses[test] - problem.design[test] @ theta
                l0 = int(np.count_nonzero(theta))
                mse.append(float(resid @ resid) / test.size)
                under.append(l0 < s)
                over.append(l0 if l0 > s else 0)
        return float(np.mean(mse) + c1 * np.mean(under) + c2 * np.mean(over))

    def scan(candidates, fixed, first: bool):
        best_lam, best_val = None, math.inf
        for lam in candidates:
            val = loss(lam, fixed) if first else loss(fixed, lam)
            if val < best_val:
                best_lam, best_val = float(lam), val
        return best_lam, best_val

    lam_i = float(grid_i[grid_i.size // 2])
    lam_t = float(grid_t[grid_t.size // 2])
    value = math.inf
    for r in range(rounds):
        lam_i, value = scan(grid_i, lam_t, True)
        lam_t, value = scan(grid_t, lam_i, False)
        logger.debug("CV rodada %d: lambda_init=%.4g lambda_thres=%.4g loss=%.4g", r, lam_i, lam_t, value)
        grid_i = _narrow(grid_i, lam_i)
        grid_t = _narrow(grid_t, lam_t)
    return TunedLambdas(lambda_init=lam_i, lambda_thres=lam_t, loss=value, evaluations=evaluations)


def summary_hardness(summary: InstanceSummary, m: int) -> float:
    """H2(min(m, K)), para ordens acima do número de braços."""
    return hardness(summary, max(2, min(m, summary.gaps.shape[0] + 1)))
