import math
from collections import Counter

import numpy as np
import pytest

from app.analysis import (
    TheoryInputs,
    analytical_hyperparameters,
    bound_lasso_od,
    bound_lasso_od_analytical,
    bound_od_linbai,
    bound_popart_od,
    bound_support_recovery,
    cv_tune,
    evaluate_bounds,
    hardness_lower_bound_finite_set,
    od_linbai_rounds,
    split_budget,
    x_max_sq,
    x_max_sq_relaxed,
)
from app.exceptions import CrossValidationError, EnumerationLimitExceeded, InvalidInstance
from app.sparse import RegressionProblem


# --- Limites ---
def test_support_bound_example():
    bound = bound_support_recovery(1000, 0.4, 10, 1.0)
    assert bound.raw == pytest.approx(20 * math.exp(-5))
    assert bound.probability == pytest.approx(0.1347, abs=1e-4)
    assert not bound.vacuous


def test_support_bound_zero_lambda_is_vacuous():
    bound = bound_support_recovery(1000, 0.0, 10, 1.0)
    assert bound.vacuous
    assert bound.probability == 1.0


def test_support_bound_clipped():
    bound = bound_support_recovery(1, 0.01, 10, 1.0)
    assert bound.raw > 1.0
    assert bound.probability == 1.0
    assert bound.vacuous


def test_od_linbai_bound_example():
    bound = bound_od_linbai(2, 2, 320, 2.0)
    expected = 3 * math.exp(-320 / (16 * 1.0125 * 2))
    assert bound.raw == pytest.approx(expected)


@pytest.mark.parametrize("d,rounds", [(1, 1), (2, 1), (3, 2), (8, 3), (10, 4)])
def test_od_linbai_rounds(d, rounds):
    assert od_linbai_rounds(d) == rounds


def test_lasso_od_inputs_derived_fields():
    inputs = TheoryInputs(
        K=50, d=10, s=2, T=800, T1=200, lambda_init=0.4, lambda_thres=0.2, theta_min=1.0, b=1.0,
    )
    assert inputs.c == pytest.approx(0.5)
    assert inputs.s1 == 6
    assert inputs.T2 == 600
    assert inputs.epsilon == pytest.approx(36 / 600)
    assert inputs.hypothesis_holds()


def test_lasso_od_bound_sums_both_phases():
    inputs = TheoryInputs(
        K=50, d=10, s=2, T=800, T1=200, lambda_init=0.4, lambda_thres=0.2,
        theta_min=1.0, b=1.0, hardness_s1=3.0,
    )
    bound = bound_lasso_od(inputs)
    phase2, phase1 = bound.terms
    assert bound.raw == pytest.approx(phase2.probability + phase1.probability)
    assert phase1.raw == pytest.approx(bound_support_recovery(200, 0.4, 10, 1.0).raw)
    expected_exp = math.floor(600 / math.log2(6)) / (16 * (1 + 36 / 600) * 3.0)
    assert phase2.exponent == pytest.approx(expected_exp)


def test_lasso_od_bound_vacuous_when_hypothesis_fails():
    inputs = TheoryInputs(
        K=50, d=10, s=2, T=800, T1=200, lambda_init=0.4, lambda_thres=0.2,
        theta_min=0.5, b=1.0, hardness_s1=3.0,
    )
    assert not inputs.hypothesis_holds()
    assert bound_lasso_od(inputs).vacuous


def test_lasso_od_bound_requires_split():
    inputs = TheoryInputs(K=5, d=4, s=1, T=100, theta_min=1.0, hardness_s1=1.0)
    with pytest.raises(InvalidInstance):
        bound_lasso_od(inputs)


def test_theory_inputs_reject_T1_equal_T():
    with pytest.raises(ValueError):
        TheoryInputs(K=5, d=4, s=1, T=100, T1=100, theta_min=1.0)


def test_analytical_and_popart_bounds_in_unit_interval():
    c = bound_lasso_od_analytical(50, 10, 2, 10_000, 3.0, 4.0)
    p = bound_popart_od(50, 10, 2, 10_000, 8.0, 2.0)
    for bound in (c, p):
        assert 0.0 <= bound.probability <= 1.0
        assert bound.exponent > 0
        assert bound.prefactor == pytest.approx(50 + math.log2(10) + 20)


def test_bounds_decrease_in_T():
    values = [bound_lasso_od_analytical(50, 10, 2, t, 3.0, 4.0).raw for t in (1000, 2000, 4000)]
    assert values[0] > values[1] > values[2]


def test_evaluate_bounds_selects_available():
    inputs = TheoryInputs(
        K=50, d=10, s=2, T=800, T1=200, lambda_init=0.4, lambda_thres=0.2,
        theta_min=1.0, b=1.0, hardness_d=5.0, hardness_s1=3.0,
    )
    assert set(evaluate_bounds(inputs)) == {"support", "odlinbai", "lasso_od"}
    bare = TheoryInputs(K=5, d=4, s=1, T=100, theta_min=1.0)
    assert evaluate_bounds(bare) == {}


# --- Hiperparâmetros analíticos ---
def test_analytical_example():
    params = analytical_hyperparameters(b=1.0, theta_min=1.0, s=2, x_max_sq=1.0, T=800)
    assert params.kappa == pytest.approx(25 / 24)
    assert params.lambda_init == pytest.approx(0.4)
    assert params.lambda_thres == pytest.approx(0.2)
    assert params.c0 == pytest.approx(8 * (25 / 24) / math.log2(6))
    assert params.c0 == pytest.approx(3.2238, abs=1e-4)
    assert params.s1 == 6
    assert params.hypothesis_holds
    assert params.T1 + params.T2 == 800


@pytest.mark.parametrize("s", [1, 2, 3, 5, 8, 16, 32, 64])
@pytest.mark.parametrize("b", [0.5, 4.0])
def test_analytical_hypothesis_always_holds(s, b):
    params = analytical_hyperparameters(b=b, theta_min=0.7, s=s, x_max_sq=2.0, T=10_000)
    assert params.hypothesis_holds
    assert params.s1 == s + s * s


def test_analytical_balances_exponents():
    b, theta_min, s, x_sq, T, h = 8.0, 1.0, 2, 0.5, 100_000, 12.0
    params = analytical_hyperparameters(b, theta_min, s, x_sq, T, hardness_value=h)
    s1 = s + s * s
    phase1_exponent = params.T1 * params.lambda_init ** 2 / (32 * x_sq)
    phase2_exponent = params.T2 / (16 * h * math.log2(s1))
    assert phase1_exponent == pytest.approx(phase2_exponent, rel=2.0 / min(params.T1, params.T2))


@pytest.mark.parametrize("T,c0,expected", [(100, 1.0, (50, 50)), (10, 1000.0, (9, 1)), (10, 1e-6, (1, 9))])
def test_split_budget(T, c0, expected):
    assert split_budget(T, c0) == expected


def test_x_max_sq_variants():
    arms = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert x_max_sq([0.5, 0.5], arms) == pytest.approx(2.0)
    assert x_max_sq([1.0, 0.0], arms) == pytest.approx(1.0)
    assert x_max_sq_relaxed(arms) == pytest.approx(4.0)


def test_finite_set_hardness_basis():
    assert hardness_lower_bound_finite_set(np.eye(3), 1, 2) == pytest.approx(2.0)


def test_finite_set_hardness_limit():
    with pytest.raises(EnumerationLimitExceeded):
        hardness_lower_bound_finite_set(np.eye(40), 10, 12)


# --- Validação cruzada ---
def _noiseless_problem():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((50, 5)))
    x = math.sqrt(50) * q
    return RegressionProblem(x, x @ np.array([1.0, 1.0, 0.0, 0.0, 0.0]))


def test_cv_tune_picks_small_pair():
    tuned = cv_tune(
        _noiseless_problem(), init_grid=[0.01, 0.5], thres_grid=[0.05, 2.0],
        s=2, rounds=1, rng=np.random.default_rng(1),
    )
    assert (tuned.lambda_init, tuned.lambda_thres) == (0.01, 0.05)
    assert tuned.evaluations == 4


def test_cv_tune_singleton_grids():
    tuned = cv_tune(
        _noiseless_problem(), init_grid=[0.1], thres_grid=[0.3], s=2, rounds=2,
        rng=np.random.default_rng(2),
    )
    assert (tuned.lambda_init, tuned.lambda_thres) == (0.1, 0.3)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"init_grid": []},
        {"thres_grid": [0.0, 1.0]},
        {"folds": 1},
    ],
)
def test_cv_tune_invalid(kwargs):
    with pytest.raises(CrossValidationError):
        cv_tune(_noiseless_problem(), **kwargs)


def test_cv_tune_too_few_samples():
    problem = RegressionProblem(np.eye(3), [1.0, 0.0, 0.0])
    with pytest.raises(CrossValidationError):
        cv_tune(problem, folds=5)


def test_cv_tune_invariant_to_row_order():
    problem = _noiseless_problem()
    order = np.random.default_rng(7).permutation(problem.n)
    shuffled = RegressionProblem(problem.design[order], problem.responses[order])
    picks = []
    for data in (problem, shuffled):
        picks.append(Counter(
            (tuned.lambda_init, tuned.lambda_thres)
            for tuned in (
                cv_tune(data, init_grid=[0.01, 0.5], thres_grid=[0.05, 2.0], s=2, rounds=1,
                        rng=np.random.default_rng(seed))
                for seed in range(10)
            )
        ))
    assert picks[0] == picks[1] == Counter({(0.01, 0.05): 10})
