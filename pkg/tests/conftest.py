import numpy as np
import pytest

from gstunlearn.graph import Graph


def random_graph(rng, g, p=0.4, signed=True):
    upper = np.triu(rng.random((g, g)) < p, k=1).astype(float)
    A = upper + upper.T
    x = rng.uniform(-1, 1, g) if signed else rng.uniform(0, 1, g)
    return Graph(A, x)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    line = f"acceptance {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
