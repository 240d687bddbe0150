import numpy as np
import pytest

from spadeopt.pipelines import forward_for
from spadeopt.sources import scenario

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def points03():
    return scenario("five-points", dx=0.3)


@pytest.fixture(scope="session")
def fwd_points03(points03):
    return forward_for(points03)


@pytest.fixture(scope="session")
def small_rect():
    """A cheap extended source: 6 bins of width 1.6 over +-4.8."""
    return scenario("smooth-1d-b", a=1.6, extent=4.8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
