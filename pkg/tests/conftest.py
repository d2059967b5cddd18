import numpy as np
import pytest

from app.bandit import BanditInstance
from app.config import get_settings


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="Executa os testes estatísticos marcados como slow.",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="precisa de --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def basis_instance():
    """theta* = (1, 0) sobre a base canônica de R^2, sem ruído."""
    return BanditInstance(arms=np.eye(2), theta_star=[1.0, 0.0], s=1, noise_sigma=0.0)
