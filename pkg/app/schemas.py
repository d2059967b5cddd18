"""Schemas Pydantic para request/response e arquivos de configuração."""
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.bandit import BanditInstance
from app.config import get_settings

Family = Literal["sphere", "robust", "gaussian", "finite", "cosine"]
AlgorithmName = Literal["odlinbai", "gse", "lasso-od", "lasso-xy", "popart-od"]
Mode = Literal["explicit", "cv", "analytical", "analytical-lb"]


# --- Instância ---
class InstancePayload(BaseModel):
    arms: List[List[float]]  # K x d, linha a linha
    theta_star: List[float]
    s: int = Field(..., ge=1)
    noise_sigma: float = Field(1.0, ge=0)
    bounded_mean: bool = False
    approximately_sparse: bool = False

    def to_instance(self) -> BanditInstance:
        return BanditInstance(
            arms=self.arms,
            theta_star=self.theta_star,
            s=self.s,
            noise_sigma=self.noise_sigma,
            bounded_mean=self.bounded_mean,
            approximately_sparse=self.approximately_sparse,
        )

    @classmethod
    def from_instance(cls, instance: BanditInstance) -> "InstancePayload":
        return cls(
            arms=instance.arms.tolist(),
            theta_star=instance.theta_star.tolist(),
            s=instance.s,
            noise_sigma=instance.noise_sigma,
            bounded_mean=instance.bounded_mean,
            approximately_sparse=instance.approximately_sparse,
        )


class InstanceSpec(BaseModel):
    """Família geradora e seus parâmetros (delta só na família robust)."""

    family: Family = "sphere"
    d: int = Field(10, ge=1)
    K: int = Field(50, ge=2)
    s: int = Field(2, ge=1)
    delta: float = Field(0.0, ge=0)
    noise_sigma: float = Field(default_factory=lambda: get_settings().noise_sigma, ge=0)

    @model_validator(mode="after")
    def _check_sparsity(self):
        if self.s > self.d:
            raise ValueError("s deve ser <= d.")
        if self.family == "cosine" and self.s != 2:
            raise ValueError("A família cosine exige s = 2.")
        return self


# --- Benchmark ---
class AlgorithmSpec(BaseModel):
    name: AlgorithmName
    mode: Mode = "explicit"
    T1_fraction: Optional[float] = Field(None, gt=0, lt=1)
    lambda_init: Optional[float] = Field(None, gt=0)
    lambda_thres: Optional[float] = Field(None, gt=0)
    label: Optional[str] = None  # nome na coluna algo do CSV

    @property
    def display_name(self) -> str:
        if self.label:
            return self.label
        if self.name in ("lasso-od", "lasso-xy") and self.mode != "explicit":
            return f"{self.name}-{self.mode}"
        return self.name

    @model_validator(mode="after")
    def _check_explicit(self):
        if self.name in ("lasso-od", "lasso-xy") and self.mode == "explicit":
            if self.T1_fraction is None or self.lambda_init is None or self.lambda_thres is None:
                raise ValueError("Modo explicit requer T1_fraction, lambda_init e lambda_thres.")
        return self


class ExperimentConfig(InstanceSpec):
    algorithms: List[AlgorithmSpec] = Field(..., min_length=1)
    budgets: List[int] = Field(..., min_length=1)
    trials: int = Field(default_factory=lambda: get_settings().bench_trials, ge=1)
    base_seed: int = Field(default_factory=lambda: get_settings().default_seed, ge=0)
    fixed_instance: bool = False

    @field_validator("budgets")
    @classmethod
    def _increasing(cls, budgets: List[int]) -> List[int]:
        if any(t < 2 for t in budgets):
            raise ValueError("Todo orçamento T deve ser >= 2.")
        if any(nxt <= prev for prev, nxt in zip(budgets, budgets[1:])):
            raise ValueError("Orçamentos devem ser estritamente crescentes.")
        return budgets

    def instance_spec(self) -> InstanceSpec:
        return InstanceSpec(
            family=self.family, d=self.d, K=self.K, s=self.s,
            delta=self.delta, noise_sigma=self.noise_sigma,
        )


class SupportRecoveryConfig(BaseModel):
    d: int = Field(10, ge=1)
    sparsities: List[int] = Field(default_factory=lambda: [2, 4], min_length=1)
    budgets: List[int] = Field(default_factory=lambda: [100, 200, 400, 800], min_length=1)
    trials: int = Field(2000, ge=1)
    noise_sigma: float = Field(1.0, ge=0)
    base_seed: int = Field(0, ge=0)
    lambda_mode: Literal["universal", "explicit"] = "universal"
    lambda_init: Optional[float] = Field(None, gt=0)
    lambda_thres: Optional[float] = Field(None, gt=0)
    confidence_delta: float = Field(0.01, gt=0, lt=1)

    @model_validator(mode="after")
    def _check(self):
        if any(s < 1 or s > self.d for s in self.sparsities):
            raise ValueError("Cada s deve estar em [1, d].")
        if any(t < 1 for t in self.budgets):
            raise ValueError("Orçamentos devem ser >= 1.")
        if self.lambda_mode == "explicit" and (self.lambda_init is None or self.lambda_thres is None):
            raise ValueError("lambda_mode explicit requer lambda_init e lambda_thres.")
        if self.lambda_mode == "universal" and self.noise_sigma == 0:
            raise ValueError("lambda universal requer noise_sigma > 0.")
        return self


# --- Desenho ótimo ---
class DesignRequest(BaseModel):
    arms: List[List[float]]
    kind: Literal["e", "g", "xy", "popart"] = "g"
    T: Optional[int] = Field(None, ge=1)  # se presente, devolve também as contagens do ROUND
    tol: Optional[float] = Field(None, gt=0)
    max_iters: Optional[int] = Field(None, ge=1)


class DesignResponse(BaseModel):
    weights: List[float]
    objective: float
    certificate_gap: float
    converged: bool
    degenerate: bool = False
    iterations: int = 0
    counts: Optional[List[int]] = None


# --- Estimação esparsa ---
class EstimateRequest(BaseModel):
    X: List[List[float]]
    y: List[float]
    lambda_init: float = Field(..., gt=0)
    lambda_thres: float = Field(..., gt=0)


class EstimateResponse(BaseModel):
    theta: List[float]
    support: List[int]
    theta_init: Optional[List[float]] = None
    converged: bool = True


# --- Execução de um algoritmo ---
class RunRequest(BaseModel):
    instance: InstancePayload
    algo: AlgorithmName = "lasso-od"
    T: int = Field(..., ge=2)
    mode: Mode = "explicit"
    T1: Optional[int] = Field(None, ge=1)
    T1_fraction: Optional[float] = Field(None, gt=0, lt=1)
    lambda_init: Optional[float] = Field(None, gt=0)
    lambda_thres: Optional[float] = Field(None, gt=0)
    seed: int = Field(default_factory=lambda: get_settings().default_seed, ge=0)


class RoundRecordResponse(BaseModel):
    round: int
    active_arms: List[int]
    counts: List[int]
    dimension: int
    budget: int


class RunResponse(BaseModel):
    chosen_arm: int
    best_arm: Optional[int] = None
    correct: Optional[bool] = None
    phase1_budget: int
    phase2_budget: int
    support_found: Optional[List[int]] = None
    fallback: bool = False
    round_trace: List[RoundRecordResponse] = []
    details: dict = {}


# --- Limites ---
class BoundResponse(BaseModel):
    probability: float
    raw: float
    exponent: Optional[float] = None
    prefactor: Optional[float] = None
    vacuous: bool = False
    note: str = ""
    terms: Optional[List["BoundResponse"]] = None


BoundResponse.model_rebuild()
