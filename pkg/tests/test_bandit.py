import numpy as np
import pytest

from app.bandit import (
    BanditInstance,
    hardness,
    pulls_from_counts,
    sample_rewards,
    summarize,
    summarize_means,
    trial_rng,
)
from app.exceptions import InvalidInstance, NonUniqueBestArm
from tests.helpers import sphere_instance


def test_summarize_basis(basis_instance):
    summary = summarize(basis_instance)
    assert np.allclose(summary.means, [1.0, 0.0])
    assert summary.best_arm == 0
    assert np.allclose(summary.gaps, [1.0])
    assert list(summary.ranking) == [1]


def test_summarize_tie_raises():
    # braços ortogonais a theta*: todas as médias iguais
    instance = BanditInstance(arms=[[0.0, 1.0], [0.0, 2.0]], theta_star=[1.0, 0.0], s=1)
    with pytest.raises(NonUniqueBestArm):
        summarize(instance)


def test_means_are_sum_of_leading_coordinates():
    instance = sphere_instance(3, d=10, k=20, s=2)
    assert np.allclose(instance.means, instance.arms[:, 0] + instance.arms[:, 1], atol=1e-12)


def test_gaps_sorted_and_positive():
    summary = summarize(sphere_instance(11))
    assert summary.gaps[0] > 0
    assert np.all(np.diff(summary.gaps) >= 0)
    assert summary.means[summary.best_arm] == summary.means.max()


def test_zeroing_off_support_columns_keeps_means():
    instance = sphere_instance(5)
    arms = instance.arms.copy()
    arms[:, 2:] = 0.0
    zeroed = BanditInstance(arms=arms, theta_star=instance.theta_star, s=2)
    assert np.allclose(zeroed.means, instance.means)
    assert summarize(zeroed).best_arm == summarize(instance).best_arm


def test_hardness_examples():
    summary = summarize_means(np.array([1.0, 0.5, 0.5, 0.0]))
    assert np.allclose(summary.gaps, [0.5, 0.5, 1.0])
    assert hardness(summary, 4) == pytest.approx(12.0)
    single = summarize_means(np.array([1.0, 0.0]))
    assert hardness(single, 2) == pytest.approx(2.0)


@pytest.mark.parametrize("m", [1, 5])
def test_hardness_out_of_range(m):
    summary = summarize_means(np.array([1.0, 0.5, 0.5, 0.0]))
    with pytest.raises(InvalidInstance):
        hardness(summary, m)


@pytest.mark.parametrize("seed", range(10))
def test_hardness_nondecreasing_in_m(seed):
    summary = summarize(sphere_instance(seed, k=12))
    values = [hardness(summary, m) for m in range(2, 13)]
    assert all(b >= a for a, b in zip(values, values[1:]))


@pytest.mark.parametrize("s", [1, 2])
def test_bounded_mean_hardness_lower_bound(s):
    rng = np.random.default_rng(s)
    d = 4
    arms = rng.uniform(-1.0, 1.0, size=(10, d))
    theta = np.zeros(d)
    theta[:s] = 1.0 / s
    instance = BanditInstance(arms=arms, theta_star=theta, s=s, bounded_mean=True)
    m = s + s * s
    assert hardness(summarize(instance), m) >= m / 4


def test_bounded_mean_violation():
    with pytest.raises(InvalidInstance):
        BanditInstance(arms=[[2.0, 0.0], [0.0, 1.0]], theta_star=[1.0, 0.0], s=1, bounded_mean=True)


@pytest.mark.parametrize(
    "arms,theta,s",
    [
        ([[1.0, 0.0]], [1.0, 0.0], 1),  # K = 1
        ([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0, 0.0], 1),  # dimensões diferentes
        ([[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0], 1),  # |suporte| != s
        ([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0], 3),  # s > d
        ([[1.0, np.nan], [0.0, 1.0]], [1.0, 0.0], 1),
    ],
)
def test_invalid_instances(arms, theta, s):
    with pytest.raises(InvalidInstance):
        BanditInstance(arms=arms, theta_star=theta, s=s)


def test_approximately_sparse_support():
    theta = [1.0, 0.9, 0.01, -0.01]
    instance = BanditInstance(
        arms=np.eye(4), theta_star=theta, s=2, approximately_sparse=True,
    )
    assert list(instance.support) == [0, 1]
    assert instance.theta_min == pytest.approx(0.9)


def test_instance_is_immutable(basis_instance):
    with pytest.raises(ValueError):
        basis_instance.arms[0, 0] = 5.0


def test_noiseless_rewards(basis_instance):
    rewards = sample_rewards(basis_instance, [0, 0, 1], np.random.default_rng(0))
    assert rewards.tolist() == [1.0, 1.0, 0.0]


def test_rewards_deterministic_given_seed():
    instance = sphere_instance(1, sigma=1.0)
    pulls = np.arange(50).repeat(3)
    a = sample_rewards(instance, pulls, trial_rng(7, 1, 2))
    b = sample_rewards(instance, pulls, trial_rng(7, 1, 2))
    assert np.array_equal(a, b)


def test_reward_sample_mean():
    instance = BanditInstance(arms=np.eye(2), theta_star=[1.0, 0.0], s=1, noise_sigma=1.0)
    rewards = sample_rewards(instance, np.zeros(100_000, dtype=int), np.random.default_rng(42))
    assert abs(rewards.mean() - 1.0) < 0.02


@pytest.mark.parametrize("pulls", [[0, 2], [-1]])
def test_reward_index_out_of_range(basis_instance, pulls):
    with pytest.raises(InvalidInstance):
        sample_rewards(basis_instance, pulls, np.random.default_rng(0))


def test_pulls_from_counts():
    assert pulls_from_counts(np.array([2, 0, 1])).tolist() == [0, 0, 2]


def test_trial_streams_differ():
    first = [trial_rng(0, 0, t).random() for t in range(100)]
    assert len(set(first)) == 100
    assert trial_rng(0, 0, 3).random() == trial_rng(0, 0, 3).random()
