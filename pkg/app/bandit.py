"""
Instâncias de bandit linear esparso: médias, gaps, dificuldade H2
e simulação de recompensas ruidosas.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from app.exceptions import InvalidInstance, NonUniqueBestArm

logger = logging.getLogger(__name__)

# Tolerância para considerar duas médias empatadas no máximo.
TIE_TOL = 1e-12


def trial_rng(base_seed: int, *key: int) -> np.random.Generator:
    """Fluxo independente e reprodutível derivado de (semente base, chave)."""
    seq = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(seq)


def _frozen(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidInstance(f"{name} deve ter {ndim} dimensão(ões), recebeu {arr.ndim}.")
    if not np.all(np.isfinite(arr)):
        raise InvalidInstance(f"{name} contém valores não finitos.")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """
    Instância de bandit linear: K braços a(k) em R^d, parâmetro oculto theta*
    com s coordenadas não nulas e ruído gaussiano de desvio noise_sigma.

    approximately_sparse marca instâncias da família de robustez, em que
    theta* tem entradas pequenas fora do suporte nominal; o suporte passa a
    ser o das s maiores magnitudes.
    """

    arms: np.ndarray
    theta_star: np.ndarray
    s: int
    noise_sigma: float = 1.0
    bounded_mean: bool = False
    approximately_sparse: bool = False
    means: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arms = _frozen(self.arms, 2, "arms")
        theta = _frozen(self.theta_star, 1, "theta_star")
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "theta_star", theta)
        k, d = arms.shape
        if k < 2:
            raise InvalidInstance("A instância precisa de pelo menos 2 braços.")
        if theta.shape[0] != d:
            raise InvalidInstance(
                f"theta_star tem dimensão {theta.shape[0]}, braços têm dimensão {d}."
            )
        if not 1 <= self.s <= d:
            raise InvalidInstance(f"Esparsidade s={self.s} fora de [1, {d}].")
        if self.noise_sigma < 0:
            raise InvalidInstance("noise_sigma deve ser não negativo.")
        nonzero = int(np.count_nonzero(theta))
        if not self.approximately_sparse and nonzero != self.s:
            raise InvalidInstance(f"|suporte(theta*)|={nonzero} difere de s={self.s}.")
        if self.theta_min <= 0:
            raise InvalidInstance("theta_min deve ser positivo.")
        means = arms @ theta
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        if self.bounded_mean and np.max(np.abs(means)) > 1 + 1e-12:
            raise InvalidInstance("Instância marcada bounded_mean com |mu_k| > 1.")

    @property
    def n_arms(self) -> int:
        return self.arms.shape[0]

    @property
    def dimension(self) -> int:
        return self.arms.shape[1]

    @property
    def support(self) -> np.ndarray:
        """Índices (0-based, ordenados) do suporte de theta*."""
        if self.approximately_sparse:
            top = np.argsort(-np.abs(self.theta_star), kind="stable")[: self.s]
            return np.sort(top)
        return np.flatnonzero(self.theta_star)

    @property
    def theta_min(self) -> float:
        return float(np.min(np.abs(self.theta_star[self.support])))

    def project(self, support: Sequence[int]) -> np.ndarray:
        """Braços restritos às coordenadas do suporte dado."""
        return self.arms[:, np.asarray(support, dtype=int)]


@dataclass(frozen=True, eq=False)
class InstanceSummary:
    """Médias, melhor braço (único) e gaps ordenados de forma crescente."""

    means: np.ndarray
    best_arm: int
    gaps: np.ndarray
    ranking: np.ndarray  # braços não ótimos, na ordem dos gaps


def summarize(instance: BanditInstance) -> InstanceSummary:
    return summarize_means(instance.means)


def summarize_means(means: np.ndarray) -> InstanceSummary:
    """Resumo a partir do vetor de médias; empates no máximo levantam erro."""
    means = np.asarray(means, dtype=np.float64)
    best = int(np.argmax(means))
    top = means[best]
    scale = max(1.0, abs(float(top)))
    if np.count_nonzero(means >= top - TIE_TOL * scale) > 1:
        raise NonUniqueBestArm(f"Mais de um braço atinge a média máxima {top:.6g}.")
    others = np.delete(np.arange(means.shape[0]), best)
    gaps = top - means[others]
    order = np.argsort(gaps, kind="stable")
    gaps = gaps[order]
    ranking = others[order]
    gaps.setflags(write=False)
    ranking.setflags(write=False)
    return InstanceSummary(means=means, best_arm=best, gaps=gaps, ranking=ranking)


def hardness(summary: InstanceSummary, m: int) -> float:
    """H2(m) = max_{2<=i<=m} i / Delta_i^2, com os gaps ordenados."""
    k = summary.gaps.shape[0] + 1
    if not 2 <= m <= k:
        raise InvalidInstance(f"m={m} fora de [2, {k}].")
    i = np.arange(2, m + 1)
    return float(np.max(i / summary.gaps[: m - 1] ** 2))


def sample_rewards(
    instance: BanditInstance,
    pull_sequence: Sequence[int] | np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Recompensas y_t = <theta*, a(A_t)> + eps_t para a sequência de puxadas."""
    pulls = np.asarray(pull_sequence, dtype=int)
    if pulls.size and (pulls.min() < 0 or pulls.max() >= instance.n_arms):
        raise InvalidInstance(f"Índice de braço fora de [0, {instance.n_arms}).")
    rewards = instance.means[pulls].astype(np.float64)
    if instance.noise_sigma > 0:
        rewards = rewards + instance.noise_sigma * rng.standard_normal(pulls.shape[0])
    return rewards


def pulls_from_counts(counts: np.ndarray) -> np.ndarray:
    """Sequência de índices com counts[i] repetições do braço i."""
    return np.repeat(np.arange(counts.shape[0]), counts.astype(int))
