import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tswls import Scenario, default_scenario

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def scene():
    return default_scenario()


def random_scenario(rng, n_ris=3, box=50.0, margin=3.0):
    """Random well-conditioned scene: anchors and MU spread in a cube, no axis ties."""
    while True:
        bs = rng.uniform(-box, box, 3)
        ris = rng.uniform(-box, box, (n_ris, 3))
        mu = rng.uniform(-box, box, 3)
        d = mu - ris
        if np.min(np.abs(mu - bs)) < margin or np.min(np.hypot(d[:, 0], d[:, 1])) < margin:
            continue
        if np.min(np.linalg.norm(d, axis=1)) < 2 * margin:
            continue
        # keep elevations away from the poles so weights stay moderate
        if np.max(np.abs(d[:, 2]) / np.hypot(d[:, 0], d[:, 1])) > 5:
            continue
        return Scenario(bs, ris, mu)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one verdict line per criterion; printed in the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
