"""
Linha de comando: python -m app <subcomando>.

Códigos de saída: 0 sucesso, 1 entrada inválida ou erro do solver,
2 benchmark com tentativas que falharam.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from app import service
from app.analysis import TheoryInputs
from app.bandit import trial_rng
from app.config import get_settings, setup_logging
from app.exceptions import BanditError
from app.harness import (
    generate_instance,
    load_experiment_config,
    run_benchmark,
    support_recovery_experiment,
)
from app.schemas import (
    DesignRequest,
    EstimateRequest,
    InstancePayload,
    InstanceSpec,
    RunRequest,
    SupportRecoveryConfig,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURES = 2


def _read_json(path: str):
    if path == "-":
        return json.load(sys.stdin)
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _emit(data, out: Optional[str]) -> None:
    text = json.dumps(data, indent=2, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_design(args) -> int:
    data = _read_json(args.arms)
    if isinstance(data, list):
        data = {"arms": data}
    req = DesignRequest.model_validate({**data, "kind": args.kind, **({"T": args.T} if args.T else {})})
    _emit(service.solve_design(req).model_dump(exclude_none=True), args.out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    req = EstimateRequest.model_validate(_read_json(args.input))
    _emit(service.estimate(req).model_dump(), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    req = RunRequest(
        instance=InstancePayload.model_validate(_read_json(args.instance)),
        algo=args.algo,
        T=args.T,
        mode=args.mode,
        T1=args.T1,
        T1_fraction=args.T1_fraction,
        lambda_init=args.lambda_init,
        lambda_thres=args.lambda_thres,
        seed=args.seed,
    )
    _emit(service.run(req).model_dump(), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    inputs = TheoryInputs.model_validate(_read_json(args.input))
    _emit(service.bounds(inputs), args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    spec = InstanceSpec(
        family=args.family, d=args.d, K=args.K, s=args.s,
        delta=args.delta, noise_sigma=args.noise_sigma,
    )
    instance = generate_instance(spec, trial_rng(args.seed))
    _emit(InstancePayload.from_instance(instance).model_dump(), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    config = load_experiment_config(args.config)
    if args.trials is not None:
        config = type(config).model_validate({**config.model_dump(), "trials": args.trials})
    report = run_benchmark(config, workers=args.workers)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            report.write_csv(fh, omit_timing=args.omit_timing)
    else:
        report.write_csv(sys.stdout, omit_timing=args.omit_timing)
    if report.failures:
        logger.error("%d tentativas falharam; veja o log.", report.failures)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_support(args) -> int:
    data = _read_json(args.config) if args.config else {}
    config = SupportRecoveryConfig.model_validate(data)
    if args.trials is not None:
        config = type(config).model_validate({**config.model_dump(), "trials": args.trials})
    report = support_recovery_experiment(config)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            report.write_csv(fh)
    else:
        report.write_csv(sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="python -m app",
        description="Identificação do melhor braço em bandits lineares esparsos (orçamento fixo).",
    )
    parser.add_argument("--log-level", default=None, help="Sobrescreve LOG_LEVEL.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="Desenho ótimo sobre uma matriz de braços (JSON).")
    p.add_argument("arms", help="JSON com a matriz K x d (lista ou {\"arms\": ...}); '-' lê stdin.")
    p.add_argument("--kind", choices=("e", "g", "xy", "popart"), default="g")
    p.add_argument("--T", type=int, default=None, help="Também arredonda para T puxadas.")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("estimate", help="Lasso limiarizado em {X, y, lambda_init, lambda_thres}.")
    p.add_argument("input")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("run", help="Executa um algoritmo numa instância (JSON).")
    p.add_argument("instance")
    p.add_argument("--algo", choices=("odlinbai", "gse", "lasso-od", "lasso-xy", "popart-od"), default="lasso-od")
    p.add_argument("--mode", choices=("explicit", "cv", "analytical", "analytical-lb"), default="explicit")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--T1", type=int, default=None)
    p.add_argument("--T1-fraction", dest="T1_fraction", type=float, default=None)
    p.add_argument("--lambda-init", dest="lambda_init", type=float, default=None)
    p.add_argument("--lambda-thres", dest="lambda_thres", type=float, default=None)
    p.add_argument("--seed", type=int, default=settings.default_seed)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", help="Avalia os limites de erro a partir de um JSON de entradas.")
    p.add_argument("input")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("generate", help="Gera uma instância de uma das famílias sintéticas.")
    p.add_argument("--family", choices=("sphere", "robust", "gaussian", "finite", "cosine"), default="sphere")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=settings.noise_sigma)
    p.add_argument("--seed", type=int, default=settings.default_seed)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="Benchmark Monte-Carlo; escreve o CSV de resultados.")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None, help="Padrão: BENCH_WORKERS.")
    p.add_argument("--trials", type=int, default=None, help="Sobrescreve trials do arquivo.")
    p.add_argument("--omit-timing", action="store_true", help="Deixa a coluna seconds vazia.")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("support", help="Experimento de recuperação de suporte do Lasso limiarizado.")
    p.add_argument("--config", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_support)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.func(args)
    except (BanditError, ValidationError, ValueError, OSError) as e:
        print(f"erro: {e}", file=sys.stderr)
        return EXIT_INVALID
