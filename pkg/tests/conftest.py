import pytest

from sgis import (
    ParameterSpace,
    UserResponseModel,
    generate_sessions,
)

ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    """Log one acceptance line; printed in the terminal summary."""
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {name}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_log():
    return generate_sessions(60, seed=7)


@pytest.fixture(scope="session")
def space3():
    return ParameterSpace(((0.0, 2.0), (0.0, 2.0), (-4.0, 4.0)), ("wb", "wq", "load"))


@pytest.fixture(scope="session")
def space2():
    return ParameterSpace(((0.0, 2.0), (0.0, 2.0)), ("x", "y"))


@pytest.fixture(scope="session")
def auction():
    return UserResponseModel()
