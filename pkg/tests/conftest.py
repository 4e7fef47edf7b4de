import numpy as np
import pytest

from dcnid.graph import Admg
from dcnid.markov import StateDistribution
from dcnid.traffic import traffic_index, traffic_spec


@pytest.fixture
def bow():
    return Admg(["x", "y"], [("x", "y")], [("x", "y")])


@pytest.fixture
def backdoor():
    return Admg(["z", "x", "y"], [("z", "x"), ("z", "y"), ("x", "y")])


@pytest.fixture
def traffic():
    return traffic_spec()


@pytest.fixture
def uniform8():
    return StateDistribution.uniform(traffic_index())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line per criterion, then assert it."""

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
