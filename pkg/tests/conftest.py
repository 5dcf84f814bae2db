import pytest

from staircase.distribution import StaircaseParams
from staircase.spline import build_basis, build_penalty


@pytest.fixture(scope="session")
def params():
    return StaircaseParams.create()


@pytest.fixture(scope="session")
def basis(params):
    return build_basis(params.s, params.epsilon)


@pytest.fixture(scope="session")
def penalty(basis):
    return build_penalty(basis)


@pytest.fixture(scope="session")
def small_params():
    return StaircaseParams.create(s=3, s0=2, delta=0.2)


@pytest.fixture(scope="session")
def small_basis(small_params):
    return build_basis(small_params.s, small_params.epsilon)


@pytest.fixture(scope="session")
def small_penalty(small_basis):
    return build_penalty(small_basis)


# One line per acceptance criterion, collected by tests/test_acceptance.py.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
