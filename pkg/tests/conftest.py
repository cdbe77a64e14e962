import numpy as np
import pytest

from maxqnorm.tensor_core import cp_compose


@pytest.fixture
def counterexample():
    """All-ones 2x2x2 tensor with a 2 in the corner: e1 o e1 o e1 + 1 o 1 o 1."""
    U = np.array([[1.0, 1.0], [0.0, 1.0]])
    return cp_compose([U, U, U])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#: one line per acceptance criterion, printed again in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(capsys):
    def record(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
