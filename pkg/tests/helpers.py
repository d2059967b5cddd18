import numpy as np

from app.bandit import BanditInstance


def sphere_instance(seed: int, d: int = 10, k: int = 50, s: int = 2, sigma: float = 0.0) -> BanditInstance:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((k, d))
    arms = np.sqrt(d / s) * g / np.linalg.norm(g, axis=1, keepdims=True)
    theta = np.zeros(d)
    theta[:s] = 1.0
    return BanditInstance(arms=arms, theta_star=theta, s=s, noise_sigma=sigma)
