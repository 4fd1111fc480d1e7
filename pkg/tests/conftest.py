import warnings

import numpy as np
import pytest
from hypothesis import settings

from weakqubit.model import DetectorParams, PhysicalConfig
from weakqubit.trajectory import SimConfig, simulate

# JIT compilation makes first calls slow; deadlines would be flaky.
settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# Lines collected by the acceptance module, printed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def weak_cfg():
    return PhysicalConfig.from_values(omega=1.0, deltaI=2.0, S0=10.0, eta=1.0)


@pytest.fixture(scope="session")
def detector():
    return DetectorParams(I0=0.0, deltaI=2.0, S0=10.0)


@pytest.fixture(scope="session")
def short_quantum(weak_cfg):
    """A 2e4-long weak-coupling trajectory, recorded in 0.1 blocks."""
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        return simulate(weak_cfg, SimConfig(dt=0.005, n_steps=4_000_000, seed=11,
                                            record_every=20))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
