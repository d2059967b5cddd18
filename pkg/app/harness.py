"""
Geradores das famílias de instâncias sintéticas, benchmark Monte-Carlo
(pool de processos, sementes derivadas por tentativa) e o experimento de
recuperação de suporte do Lasso limiarizado.
"""
import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, TextIO

import numpy as np
from scipy.stats import norm

from app.algorithms import run_algorithm
from app.bandit import BanditInstance, summarize, trial_rng
from app.config import get_settings, setup_logging
from app.exceptions import InvalidInstance
from app.schemas import AlgorithmSpec, ExperimentConfig, InstanceSpec, SupportRecoveryConfig
from app.sparse import RegressionProblem, estimate_support, universal_lambda

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "family", "algo", "d", "K", "s", "T", "trials",
    "errors", "p_hat", "stderr", "mean_support", "seconds",
)
SUPPORT_CSV_COLUMNS = ("d", "s", "T", "trials", "misses", "p_hat", "stderr", "mean_support")

# Chaves dos fluxos aleatórios: instâncias, algoritmos e recuperação de suporte.
INSTANCE_STREAM = 0
ALGORITHM_STREAM = 1
SUPPORT_STREAM = 2


# ---------------------------------------------------------------------------
# Geradores
# ---------------------------------------------------------------------------

def _sphere(rng: np.random.Generator, n: int, dim: int, radius: float) -> np.ndarray:
    """n pontos uniformes na esfera de raio radius em R^dim."""
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return radius * g / norms


def _leading(d: int, s: int, value: float) -> np.ndarray:
    theta = np.zeros(d)
    theta[:s] = value
    return theta


def generate_instance(spec: InstanceSpec, rng: np.random.Generator) -> BanditInstance:
    """
    sphere: braços na esfera de raio sqrt(d/s), theta* = (1, ..., 1, 0, ...).
    robust: braços de sphere, theta*_j = delta R_j (Rademacher) fora do suporte.
    gaussian: entradas N(0, 1/s), theta*_i = 1/sqrt(s) em [s].
    finite: entradas R cos(pi/4 + Z), Z ~ N(0, 0.01), theta*_i = 1/sqrt(s).
    cosine (s = 2): bloco do suporte em ângulos pi/4, 5pi/4 e pi/2 + phi.
    """
    d, k, s = spec.d, spec.K, spec.s
    sigma = spec.noise_sigma
    if spec.family in ("sphere", "robust"):
        arms = _sphere(rng, k, d, math.sqrt(d / s))
        theta = _leading(d, s, 1.0)
        if spec.family == "robust" and spec.delta > 0:
            signs = rng.choice((-1.0, 1.0), size=d - s)
            theta[s:] = spec.delta * signs
            return BanditInstance(arms, theta, s, noise_sigma=sigma, approximately_sparse=True)
        return BanditInstance(arms, theta, s, noise_sigma=sigma)
    if spec.family == "gaussian":
        arms = rng.normal(0.0, 1.0 / math.sqrt(s), size=(k, d))
        return BanditInstance(arms, _leading(d, s, 1.0 / math.sqrt(s)), s, noise_sigma=sigma)
    if spec.family == "finite":
        signs = rng.choice((-1.0, 1.0), size=(k, d))
        arms = signs * np.cos(math.pi / 4 + rng.normal(0.0, 0.1, size=(k, d)))
        return BanditInstance(arms, _leading(d, s, 1.0 / math.sqrt(s)), s, noise_sigma=sigma)
    if spec.family == "cosine":
        if s != 2:
            raise InvalidInstance("A família cosine exige s = 2.")
        angles = math.pi / 2 + rng.normal(0.0, 0.3, size=k)
        angles[0] = math.pi / 4
        angles[-1] = 5 * math.pi / 4
        arms = np.zeros((k, d))
        arms[:, 0] = np.cos(angles)
        arms[:, 1] = np.sin(angles)
        if d > s:
            arms[:, s:] = _sphere(rng, k, d - s, math.sqrt((d - s) / s))
        return BanditInstance(arms, _leading(d, s, 1.0 / math.sqrt(2.0)), s, noise_sigma=sigma)
    raise InvalidInstance(f"Família desconhecida: {spec.family}.")


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------

@dataclass
class _Tally:
    errors: int = 0
    failures: int = 0
    support_total: int = 0
    support_runs: int = 0
    seconds: float = 0.0

    def merge(self, other: "_Tally") -> None:
        self.errors += other.errors
        self.failures += other.failures
        self.support_total += other.support_total
        self.support_runs += other.support_runs
        self.seconds += other.seconds


@dataclass(frozen=True)
class BenchmarkRow:
    family: str
    algo: str
    d: int
    K: int
    s: int
    T: int
    trials: int
    errors: int
    failures: int = 0
    mean_support: Optional[float] = None
    seconds: float = 0.0

    @property
    def p_hat(self) -> float:
        return self.errors / self.trials

    @property
    def stderr(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.trials)

    def csv_values(self, omit_timing: bool = False) -> list[str]:
        return [
            self.family, self.algo, str(self.d), str(self.K), str(self.s), str(self.T),
            str(self.trials), str(self.errors),
            f"{self.p_hat:.6f}", f"{self.stderr:.6f}",
            "" if self.mean_support is None else f"{self.mean_support:.4f}",
            "" if omit_timing else f"{self.seconds:.3f}",
        ]


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchmarkRow, ...]

    @property
    def failures(self) -> int:
        return sum(r.failures for r in self.rows)

    def row(self, algo: str, T: int) -> BenchmarkRow:
        for r in self.rows:
            if r.algo == algo and r.T == T:
                return r
        raise KeyError((algo, T))

    def write_csv(self, out: TextIO, omit_timing: bool = False) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(r.csv_values(omit_timing))

    def to_csv(self, omit_timing: bool = False) -> str:
        buf = io.StringIO()
        self.write_csv(buf, omit_timing)
        return buf.getvalue()


def _run_one(spec: AlgorithmSpec, instance: BanditInstance, T: int, rng: np.random.Generator):
    return run_algorithm(
        spec.name, instance.arms, T, rng, instance,
        mode=spec.mode,
        T1_fraction=spec.T1_fraction,
        lambda_init=spec.lambda_init,
        lambda_thres=spec.lambda_thres,
    )


def _run_chunk(config_data: dict, trials: list[int]) -> dict[tuple[int, int], _Tally]:
    """Executa um bloco de tentativas; chamado dentro dos workers."""
    setup_logging()
    config = ExperimentConfig.model_validate(config_data)
    spec = config.instance_spec()
    tallies = {
        (a, b): _Tally() for a in range(len(config.algorithms)) for b in range(len(config.budgets))
    }
    fixed = None
    for trial in trials:
        key = (INSTANCE_STREAM,) if config.fixed_instance else (INSTANCE_STREAM, trial)
        try:
            if fixed is None or not config.fixed_instance:
                fixed = generate_instance(spec, trial_rng(config.base_seed, *key))
            instance = fixed
            best = summarize(instance).best_arm
        except Exception as e:
            logger.error("Tentativa %d: falha ao gerar a instância: %s", trial, e)
            for tally in tallies.values():
                tally.errors += 1
                tally.failures += 1
            continue
        for a, algo in enumerate(config.algorithms):
            for b, T in enumerate(config.budgets):
                tally = tallies[(a, b)]
                rng = trial_rng(config.base_seed, ALGORITHM_STREAM, a, b, trial)
                start = time.perf_counter()
                try:
                    outcome = _run_one(algo, instance, T, rng)
                except Exception as e:
                    logger.error("Tentativa %d, %s, T=%d: %s", trial, algo.display_name, T, e)
                    tally.errors += 1
                    tally.failures += 1
                    continue
                finally:
                    tally.seconds += time.perf_counter() - start
                if outcome.chosen_arm != best:
                    tally.errors += 1
                if outcome.support_found is not None:
                    tally.support_total += int(outcome.support_found.size)
                    tally.support_runs += 1
    return tallies


def _chunks(trials: int, parts: int) -> list[list[int]]:
    parts = max(1, min(parts, trials))
    return [list(c) for c in np.array_split(np.arange(trials), parts) if c.size]


def run_benchmark(config: ExperimentConfig, workers: Optional[int] = None) -> BenchmarkReport:
    """
    trials tentativas por (algoritmo, T). Cada tentativa usa o fluxo
    (base_seed, 0, trial) para a instância e (base_seed, 1, algo, T, trial)
    para o algoritmo; o resultado não depende do número de workers.
    """
    workers = get_settings().bench_workers if workers is None else workers
    data = config.model_dump()
    chunks = _chunks(config.trials, workers)
    totals = {
        (a, b): _Tally() for a in range(len(config.algorithms)) for b in range(len(config.budgets))
    }
    if workers <= 1:
        partials = [_run_chunk(data, chunk) for chunk in chunks]
    else:
        partials = []
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_chunk, data, chunk) for chunk in chunks]
            for future in as_completed(futures):
                partials.append(future.result())
    for partial in partials:
        for key, tally in partial.items():
            totals[key].merge(tally)

    rows = []
    for a, algo in enumerate(config.algorithms):
        for b, T in enumerate(config.budgets):
            tally = totals[(a, b)]
            row = BenchmarkRow(
                family=config.family,
                algo=algo.display_name,
                d=config.d,
                K=config.K,
                s=config.s,
                T=T,
                trials=config.trials,
                errors=tally.errors,
                failures=tally.failures,
                mean_support=(
                    tally.support_total / tally.support_runs if tally.support_runs else None
                ),
                seconds=tally.seconds,
            )
            logger.info(
                "%s %s T=%d: erro %.4f +- %.4f (%d falhas)",
                row.family, row.algo, T, row.p_hat, row.stderr, row.failures,
            )
            rows.append(row)
    return BenchmarkReport(rows=tuple(rows))


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def two_proportion_z_test(errors_a: int, n_a: int, errors_b: int, n_b: int) -> tuple[float, float]:
    """
    Teste unilateral de H1: p_a < p_b com variância agrupada.
    Devolve (z, p-valor); sem erros em nenhum dos lados, z = 0 e p = 1.
    """
    if n_a < 1 or n_b < 1:
        raise InvalidInstance("Os dois grupos precisam de pelo menos uma tentativa.")
    pooled = (errors_a + errors_b) / (n_a + n_b)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b))
    if se == 0:
        return 0.0, 1.0
    z = (errors_b / n_b - errors_a / n_a) / se
    return z, float(norm.sf(z))


# ---------------------------------------------------------------------------
# Recuperação de suporte
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupportRecoveryRow:
    d: int
    s: int
    T: int
    trials: int
    misses: int  # tentativas com S^ sem conter S(theta*)
    mean_support: float

    @property
    def p_hat(self) -> float:
        return self.misses / self.trials

    @property
    def stderr(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.trials)


@dataclass(frozen=True)
class SupportRecoveryReport:
    rows: tuple[SupportRecoveryRow, ...]

    def row(self, s: int, T: int) -> SupportRecoveryRow:
        for r in self.rows:
            if r.s == s and r.T == T:
                return r
        raise KeyError((s, T))

    def write_csv(self, out: TextIO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(SUPPORT_CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([
                r.d, r.s, r.T, r.trials, r.misses,
                f"{r.p_hat:.6f}", f"{r.stderr:.6f}", f"{r.mean_support:.4f}",
            ])


def support_recovery_experiment(config: SupportRecoveryConfig) -> SupportRecoveryReport:
    """
    X com entradas N(0, 1/s), theta* = (1/sqrt(s), ..., 0, ...), y = X theta* + ruído
    e Lasso limiarizado; lambda universal (lambda_thres = lambda_init) ou explícito.
    """
    d = config.d
    rows = []
    for s in config.sparsities:
        theta = _leading(d, s, 1.0 / math.sqrt(s))
        truth = set(range(s))
        for T in config.budgets:
            misses, total_size = 0, 0
            for trial in range(config.trials):
                rng = trial_rng(config.base_seed, SUPPORT_STREAM, s, T, trial)
                x = rng.normal(0.0, 1.0 / math.sqrt(s), size=(T, d))
                y = x @ theta + config.noise_sigma * rng.standard_normal(T)
                problem = RegressionProblem(x, y)
                if config.lambda_mode == "universal":
                    lam = universal_lambda(
                        problem, sigma=config.noise_sigma, delta=config.confidence_delta,
                    )
                    lam_i, lam_t = lam, lam
                else:
                    lam_i, lam_t = config.lambda_init, config.lambda_thres
                support = estimate_support(problem, lam_i, lam_t).support
                if not truth.issubset(int(j) for j in support):
                    misses += 1
                total_size += int(support.size)
            row = SupportRecoveryRow(
                d=d, s=s, T=T, trials=config.trials, misses=misses,
                mean_support=total_size / config.trials,
            )
            logger.info("Suporte s=%d T=%d: P(S^ sem S)=%.4f, |S^| médio=%.3f", s, T, row.p_hat, row.mean_support)
            rows.append(row)
    return SupportRecoveryReport(rows=tuple(rows))
