import dataclasses

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stars_isac.scenario import ScenarioConfig

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_config():
    """Four STARS elements and 2x2 RSU arrays."""
    return ScenarioConfig(m_side=2, n_tx_y=2, n_tx_z=2, n_rx_y=2, n_rx_z=2)


@pytest.fixture
def desk_config():
    return ScenarioConfig(m_side=4, n_tx_y=3, n_tx_z=3, n_rx_y=3, n_rx_z=3, pathloss_ref=6.25e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def replace(cfg, **kw):
    return dataclasses.replace(cfg, **kw)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(n, passed, detail)``."""

    def _record(criterion: int, passed: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
        print(line)
        request.config.stash[_ACCEPTANCE].append(line)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
