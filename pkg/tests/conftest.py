import numpy as np
import pytest
from hypothesis import HealthCheck, settings

ACCEPTANCE_KEY = pytest.StashKey[list]()

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def no2_rate():
    from stepcp.synthetic import no2_like_rate

    return no2_like_rate()


RECOVERY_SEEDS = range(10)


@pytest.fixture(scope="session")
def no2_recovery():
    """Ten simulate-then-fit runs on the NO2-like geometry with default settings.

    Shared by the posterior tests and the acceptance suite; each run takes a
    few seconds.
    """
    from stepcp.events import simulate_direct
    from stepcp.rjmcmc import ChainConfig, PriorConfig, run_chain
    from stepcp.synthetic import no2_like_rate

    rate = no2_like_rate()
    runs = []
    for seed in RECOVERY_SEEDS:
        r = np.random.default_rng(seed)
        events = simulate_direct(rate, r)
        runs.append((events, run_chain(events, PriorConfig(), ChainConfig(), r)))
    return rate, runs


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
