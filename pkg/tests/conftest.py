import numpy as np
import pytest

from drcap.scenarios import ScenarioSet

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_set(rng, T=400, N=6, rsd=0.2, mean_shift=0.0):
    delta = rng.normal(mean_shift, 0.4, (T, N))
    delta_r = rng.normal(0.0, 2.0, T)
    a_tilde = rng.uniform(1, 10, N) / 144
    a = np.clip(a_tilde * (1 + rsd * rng.standard_normal((T, N))), 1 / 144, 10 / 144)
    return ScenarioSet(delta, delta_r, a, a.mean(axis=0), a_tilde)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_set(rng):
    return random_set(rng)
