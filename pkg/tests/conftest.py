import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_pair():
    """A 32x32 linear-map pair with planted change, shared by cheap tests."""
    from hetcd.synth import SynthConfig, generate_pair

    return generate_pair(SynthConfig(n1=32, n2=32, num_change_regions=1, rng_seed=3))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
