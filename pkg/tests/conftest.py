import numpy as np
import pytest

from arrivaltime.analysis import lambda_critical
from arrivaltime.ensemble import RunConfig, run_ensemble
from arrivaltime.fields import Bohmian, BohmLike
from arrivaltime.trajectories import IntegratorSettings
from arrivaltime.wavepacket import PacketParams

SEED = 20240917


@pytest.fixture(scope="session")
def params():
    return PacketParams()


@pytest.fixture(scope="session")
def threshold(params):
    return lambda_critical(params)


@pytest.fixture(scope="session")
def settings20():
    return IntegratorSettings(t_max=20.0)


@pytest.fixture(scope="session")
def bohmian_run(params, settings20):
    return run_ensemble(RunConfig(params, Bohmian(), 20000, SEED, settings20, 201))


@pytest.fixture(scope="session")
def small_lambda_run(params, settings20, threshold):
    kind = BohmLike(0.5 * threshold.lambda_crit)
    return run_ensemble(RunConfig(params, kind, 20000, SEED + 1, settings20, 201))


@pytest.fixture(scope="session")
def large_lambda_run(params, settings20, threshold):
    kind = BohmLike(2.0 * threshold.lambda_crit)
    return run_ensemble(RunConfig(params, kind, 50000, SEED + 2, settings20, 201))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
