import pytest

from wiener_capacity import quad
from wiener_capacity.model import ChannelParams


@pytest.fixture(scope="session")
def p_mid():
    """sigma_w^2 = 5e-4, sigma_delta^2 = 1e-3, es = 1 (30 dB)."""
    return ChannelParams(5e-4, 1e-3)


@pytest.fixture(scope="session")
def dist_m2(p_mid):
    return quad.solve_input_params(p_mid, 2)
