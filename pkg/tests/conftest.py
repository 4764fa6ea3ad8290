import warnings

import numpy as np
import pytest

from simcovert import build_scenario, profile_config

warnings.filterwarnings("ignore", message="Solution may be inaccurate")


@pytest.fixture(scope="session")
def desk_cfg():
    return profile_config("desk")


@pytest.fixture(scope="session")
def desk_scenario(desk_cfg):
    scenario, _ = build_scenario(desk_cfg, seed=0)
    return scenario


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
