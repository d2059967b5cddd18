"""Configurações da aplicação."""
import logging
from functools import lru_cache
from typing import Literal

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Configurações carregadas de variáveis de ambiente."""

    # API / CLI
    app_name: str = "Lasso-OD - Bandits lineares esparsos"
    debug: bool = False
    log_level: str = "INFO"

    # Desenhos ótimos (chamadas diretas)
    design_tol: float = 1e-6
    design_max_iters: int = 100_000
    # Desenhos resolvidos dentro dos algoritmos (o arredondamento domina o erro)
    phase_design_tol: float = 1e-4
    phase_design_max_iters: int = 5_000

    # Lasso (ADMM)
    lasso_rho: float = 1.0
    lasso_tol: float = 1e-7  # resíduo KKT
    lasso_max_iters: int = 10_000

    # Validação cruzada do par (lambda_init, lambda_thres)
    cv_c1: float = 200.0
    cv_c2: float = 5.0
    cv_folds: int = 5
    cv_repeats: int = 2
    cv_rounds: int = 3
    cv_grid_points: int = 12
    cv_grid_min: float = 1e-3
    cv_grid_max: float = 1.0
    cv_phase1_fraction: float = 0.2

    # Hiperparâmetros analíticos
    compatibility_mode: Literal["exact", "sigma_min"] = "exact"
    analytical_uses_hardness: bool = True

    # Benchmark Monte-Carlo
    bench_workers: int = 1
    bench_trials: int = 1000
    default_seed: int = 0
    noise_sigma: float = 1.0

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"


@lru_cache
def get_settings() -> Settings:
    return Settings()


def setup_logging(level: str | None = None) -> None:
    """Configura o logger raiz uma única vez (CLI, API e workers)."""
    root = logging.getLogger()
    if root.handlers:
        root.setLevel(level or get_settings().log_level)
        return
    logging.basicConfig(
        level=level or get_settings().log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
