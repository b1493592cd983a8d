import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fasris.geometry_channel import ScenarioConfig, sample_scenario

settings.register_profile("fasris", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fasris")


def small_config(**kw) -> ScenarioConfig:
    base = dict(num_ports=8, active_ports=2, ris_elements=6, num_interferers=2, fas_width=2.0)
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_channels():
    return sample_scenario(small_config(), np.random.default_rng(7))


@pytest.fixture(scope="session")
def default_channels():
    return sample_scenario(ScenarioConfig(), np.random.default_rng(11))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
