import numpy as np
import pytest

from uavrate.core_model import EnvParams, Scenario
from uavrate.stats import build_grids

DESK_GNS = [(50, 50, 0), (50, 200, 0), (200, 200, 0), (200, 50, 0)]


def desk_scenario(**kw) -> Scenario:
    """The shipped desk layout at the CI slot count."""
    args = dict(gns=np.array(DESK_GNS, dtype=float), q_start=np.array([0.0, 125.0, 100.0]),
                q_end=np.array([250.0, 125.0, 100.0]), n_slots=40, delta_max=2.0)
    args.update(kw)
    return Scenario(**args)


def tiny_scenario(**kw) -> Scenario:
    """One GN between the endpoints; solves in about a second."""
    args = dict(gns=np.array([[60.0, 0.0, 0.0]]), q_start=np.array([0.0, 0.0, 60.0]),
                q_end=np.array([120.0, 0.0, 60.0]), n_slots=12, delta_max=2.0)
    args.update(kw)
    return Scenario(**args)


@pytest.fixture(scope="session")
def env():
    return EnvParams()


@pytest.fixture(scope="session")
def grid20(env):
    return build_grids(20, 20, 20, env)


@pytest.fixture(scope="session")
def grid40(env):
    return build_grids(40, 40, 40, env)
