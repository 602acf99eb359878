import pytest

from entryexit import ProjectParams, solve

GOLDEN = dict(r=0.2, mu=0.1, sigma=0.3, delta=1.0, C=10.0, K_I=-20.0, K_O=10.0)


@pytest.fixture
def golden():
    return ProjectParams(**GOLDEN, p0=3.0)


@pytest.fixture(scope="session")
def golden_solution():
    return solve(ProjectParams(**GOLDEN, p0=3.0))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
