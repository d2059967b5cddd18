import math

import numpy as np
import pytest

from app.algorithms import (
    _round_budgets,
    gse,
    lasso_od,
    lasso_od_cv,
    lasso_xy,
    od_linbai,
    popart_od,
    run_algorithm,
)
from app.analysis import TheoryInputs, bound_lasso_od, bound_support_recovery, x_max_sq
from app.bandit import BanditInstance, hardness as summary_hardness, summarize, trial_rng
from app.design import e_optimal_design, gram
from app.exceptions import InfeasibleBudget, InvalidInstance
from app.sparse import compatibility_constant_s, thresholded_lasso_phase
from tests.helpers import sphere_instance


def active_sizes(outcome):
    return [len(r.active_arms) for r in outcome.round_trace]


# --- OD-LinBAI / GSE ---
def test_single_arm_returns_without_pulls():
    instance = sphere_instance(0)
    outcome = od_linbai(instance.arms[:1], 50, np.random.default_rng(0), instance)
    assert outcome.chosen_arm == 0
    assert outcome.round_trace == ()


def test_basis_single_round(basis_instance):
    outcome = od_linbai(basis_instance.arms, 10, np.random.default_rng(0), basis_instance)
    assert outcome.chosen_arm == 0
    assert len(outcome.round_trace) == 1
    assert sum(outcome.round_trace[0].counts) == 10


def test_od_linbai_schedule():
    instance = sphere_instance(1, d=10, k=50, s=2, sigma=1.0)
    outcome = od_linbai(instance.arms, 400, np.random.default_rng(1), instance)
    assert active_sizes(outcome) == [50, 5, 3, 2]
    assert outcome.total_pulls == 400


def test_gse_schedule():
    instance = sphere_instance(2, d=4, k=8, s=2, sigma=1.0)
    outcome = gse(instance.arms, 300, np.random.default_rng(2), instance)
    assert active_sizes(outcome) == [8, 4, 2]
    assert outcome.total_pulls == 300


def test_round_budgets_remainder_goes_last():
    assert _round_budgets(403, 4) == [100, 100, 100, 103]
    assert _round_budgets(8, 1) == [8]


def test_budget_below_rounds():
    instance = sphere_instance(3)
    with pytest.raises(InfeasibleBudget):
        od_linbai(instance.arms, 3, np.random.default_rng(0), instance)


def test_round_budget_below_dimension():
    instance = sphere_instance(3)
    with pytest.raises(InfeasibleBudget):
        od_linbai(instance.arms, 20, np.random.default_rng(0), instance)


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_elimination_finds_best(seed):
    instance = sphere_instance(seed, d=4, k=8, s=2)
    best = summarize(instance).best_arm
    assert od_linbai(instance.arms, 400, np.random.default_rng(seed), instance).chosen_arm == best
    assert gse(instance.arms, 400, np.random.default_rng(seed), instance).chosen_arm == best


def test_elimination_is_deterministic_given_rng():
    instance = sphere_instance(4, sigma=1.0)
    a = od_linbai(instance.arms, 500, np.random.default_rng(11), instance)
    b = od_linbai(instance.arms, 500, np.random.default_rng(11), instance)
    assert a.chosen_arm == b.chosen_arm
    assert a.round_trace == b.round_trace


# --- Lasso-OD ---
def test_lasso_od_noiseless():
    instance = sphere_instance(0)
    outcome = lasso_od(instance.arms, 160, 640, 1e-3, 0.1, np.random.default_rng(0), instance)
    assert {0, 1} <= set(outcome.support_found.tolist())
    assert outcome.chosen_arm == summarize(instance).best_arm
    assert outcome.phase1_budget == 160
    assert outcome.phase2_budget == 640
    assert outcome.total_pulls == 800
    assert not outcome.fallback


def test_lasso_od_phase2_dimension_is_support_size():
    instance = sphere_instance(5)
    outcome = lasso_od(instance.arms, 200, 600, 1e-3, 0.5, np.random.default_rng(5), instance)
    assert outcome.round_trace[0].dimension <= outcome.support_found.size


def test_lasso_od_empty_support_falls_back():
    instance = sphere_instance(6, sigma=1.0)
    # lambda_thres acima de qualquer coeficiente: S^ vazio
    outcome = lasso_od(instance.arms, 100, 400, 0.05, 100.0, np.random.default_rng(6), instance)
    assert outcome.support_found.size == 0
    assert outcome.fallback
    assert outcome.total_pulls == 500


def test_lasso_od_invalid_split():
    instance = sphere_instance(0)
    with pytest.raises(InfeasibleBudget):
        lasso_od(instance.arms, 0, 100, 0.1, 0.1, np.random.default_rng(0), instance)


def test_lasso_xy_noiseless():
    instance = sphere_instance(7, d=4, k=8, s=2)
    outcome = lasso_xy(instance.arms, 80, 320, 1e-3, 0.1, np.random.default_rng(7), instance)
    assert outcome.chosen_arm == summarize(instance).best_arm
    assert outcome.total_pulls == 400


def test_popart_od_noiseless():
    instance = sphere_instance(8, d=4, k=8, s=2)
    outcome = popart_od(
        instance.arms, 2000, instance.theta_min, instance.s, np.random.default_rng(8), instance,
    )
    assert outcome.phase1_budget + outcome.phase2_budget == 2000
    assert {0, 1} <= set(outcome.support_found.tolist())
    assert outcome.chosen_arm == summarize(instance).best_arm
    assert outcome.details["g"] > 0


@pytest.mark.slow
def test_lasso_od_cv_noiseless():
    instance = sphere_instance(9, d=4, k=8, s=2)
    outcome = lasso_od_cv(instance.arms, 400, np.random.default_rng(9), instance, s=2)
    assert outcome.phase1_budget == 80
    assert outcome.chosen_arm == summarize(instance).best_arm
    assert outcome.details["lambda_init"] > 0


# --- Despacho ---
def test_run_algorithm_explicit_fraction():
    instance = sphere_instance(0)
    outcome = run_algorithm(
        "lasso-od", instance.arms, 800, np.random.default_rng(0), instance,
        T1_fraction=0.2, lambda_init=1e-3, lambda_thres=0.1,
    )
    assert outcome.phase1_budget == 160
    assert outcome.phase2_budget == 640


def test_run_algorithm_explicit_requires_lambdas():
    instance = sphere_instance(0)
    with pytest.raises(InvalidInstance):
        run_algorithm("lasso-od", instance.arms, 800, np.random.default_rng(0), instance, T1=100)


@pytest.mark.parametrize("name,mode", [("nope", "explicit"), ("lasso-od", "magic")])
def test_run_algorithm_unknown(name, mode):
    instance = sphere_instance(0)
    with pytest.raises(InvalidInstance):
        run_algorithm(
            name, instance.arms, 800, np.random.default_rng(0), instance,
            mode=mode, T1=100, lambda_init=0.1, lambda_thres=0.1,
        )


@pytest.mark.slow
def test_run_algorithm_analytical():
    instance = sphere_instance(10, d=4, k=8, s=2)
    outcome = run_algorithm(
        "lasso-od", instance.arms, 2000, np.random.default_rng(10), instance, mode="analytical",
    )
    assert outcome.phase1_budget + outcome.phase2_budget == 2000
    assert outcome.details["kappa"] > 0
    assert outcome.details["c0"] > 0


# --- Validade dos limites ---
def _axis_instance():
    return BanditInstance(arms=np.eye(4), theta_star=[1.0, 0.0, 0.0, 0.0], s=1, noise_sigma=1.0)


def _axis_theory(T1: int, T2: int, lambda_init: float, lambda_thres: float) -> TheoryInputs:
    instance = _axis_instance()
    design = e_optimal_design(instance.arms)
    phi = compatibility_constant_s(gram(design.weights, instance.arms), instance.s).value
    inputs = TheoryInputs(
        K=4, d=4, s=1, T=T1 + T2, T1=T1, lambda_init=lambda_init, lambda_thres=lambda_thres,
        theta_min=instance.theta_min, b=4.0 / phi, x_max_sq=x_max_sq(design.weights, instance.arms),
    )
    return inputs.model_copy(update={"hardness_s1": summary_hardness(summarize(instance), inputs.s1)})


def _binomial_ceiling(bound: float, trials: int) -> float:
    return bound + 1.645 * math.sqrt(bound * (1.0 - bound) / trials)


@pytest.mark.slow
def test_support_recovery_within_bound():
    inputs = _axis_theory(20_000, 200, 0.03, 0.48)
    bound = bound_support_recovery(inputs.T1, inputs.lambda_init, inputs.d, inputs.x_max_sq)
    assert bound.probability < 1.0
    instance = _axis_instance()
    trials, misses = 2000, 0
    for trial in range(trials):
        estimate = thresholded_lasso_phase(
            instance.arms, inputs.T1, inputs.lambda_init, inputs.lambda_thres,
            trial_rng(31, 2, trial), instance,
        )
        misses += 0 not in estimate.support.tolist()
    assert misses / trials <= _binomial_ceiling(bound.probability, trials)


@pytest.mark.slow
def test_lasso_od_error_within_bound():
    inputs = _axis_theory(30_000, 200, 0.03, 0.48)
    assert inputs.s1 == 2
    assert inputs.hypothesis_holds()
    bound = bound_lasso_od(inputs)
    assert not bound.vacuous
    assert bound.probability < 1.0
    instance = _axis_instance()
    trials, errors = 2000, 0
    for trial in range(trials):
        outcome = lasso_od(
            instance.arms, inputs.T1, inputs.T2, inputs.lambda_init, inputs.lambda_thres,
            trial_rng(37, 1, trial), instance,
        )
        errors += outcome.chosen_arm != 0
    assert errors / trials <= _binomial_ceiling(bound.probability, trials)
