import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_measure(rng, k=20):
    from seda.measures import SpectralMeasure

    loc = rng.uniform(0.05, 10.0, size=k)
    w = rng.uniform(0.1, 1.0, size=k)
    return SpectralMeasure.from_atoms(loc, w, normalize=True)


def case1_diag(p):
    d = np.ones(p)
    d[[0, 1, -1]] = 0.01, 0.05, 10.0
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per criterion, then assert it."""

    def _report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
