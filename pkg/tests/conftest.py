import pytest

from gammasde import GammaParams, VolatilityFn, substream

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def unit():
    return GammaParams(1.0, 1.0)


@pytest.fixture
def rng():
    return substream(1234, 0)


@pytest.fixture
def affine():
    return VolatilityFn.affine(1.0, 0.1)


@pytest.fixture
def two_level():
    return VolatilityFn.piecewise([0.0, 1.0], [2.0, 3.0])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
