import numpy as np
import pytest

from invahrs import riccati
from invahrs.models import NoiseConfig
from invahrs.sim import SimRun, TrajectoryCase, simulate

ZERO6 = np.zeros((6, 6))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cfg():
    return NoiseConfig()


@pytest.fixture(scope="session")
def quiet_cfg(cfg):
    """Default references with zero noise (for noiseless simulations)."""
    return cfg.replace(Q=ZERO6, R=ZERO6)


@pytest.fixture(scope="session")
def report(cfg):
    return riccati.tune(cfg, omega_max=np.pi / 3)


@pytest.fixture(scope="session")
def still():
    return TrajectoryCase.custom((0, 0, 0), (0, 0, 0), (0, 0, 0))


@pytest.fixture(scope="session")
def case1_log():
    return simulate(1, SimRun(30.0, 0.005, seed=0))


@pytest.fixture(scope="session")
def case1_quiet(quiet_cfg):
    return simulate(1, SimRun(10.0, 0.005, seed=0, cfg=quiet_cfg))


def random_unit(rng, n=None):
    q = rng.standard_normal(4 if n is None else (n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
