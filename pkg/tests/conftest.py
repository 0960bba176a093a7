import pytest

from avformation import HdvParams, PerformanceWeights, linearize


@pytest.fixture
def default_weights():
    return PerformanceWeights(gamma_s=0.01, gamma_v=0.05, gamma_u=0.1)


@pytest.fixture
def typical_driver():
    # v_max = 30, ramp from 5 m to 35 m; the setup used throughout the studies
    return HdvParams(alpha=0.6, beta=0.9, v_max=30.0, s_st=5.0, s_go=35.0)


@pytest.fixture
def typical_coeffs(typical_driver):
    return linearize(typical_driver, 20.0)
