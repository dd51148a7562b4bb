import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fgps.gegenbauer import QuadratureRule

settings.register_profile(
    "fgps", deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("fgps")


@pytest.fixture(scope="session")
def rule1000():
    return QuadratureRule.build(1000, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
