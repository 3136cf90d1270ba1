import numpy as np
import pytest

from waveheat.model import BetaSpec, PlantConfig
from waveheat.coupling import Measurement, build_table


@pytest.fixture(scope="session")
def cfg_damped():
    return PlantConfig(L=1.0, c=0.0, beta=BetaSpec.constant(1.0, 1.0),
                       alpha=1.5)


@pytest.fixture(scope="session")
def meas_distributed():
    return Measurement.distributed(
        lambda x: np.ones_like(np.asarray(x, dtype=float)))


@pytest.fixture(scope="session")
def small_table(cfg_damped, meas_distributed):
    return build_table(cfg_damped, meas_distributed, 16, 16)
