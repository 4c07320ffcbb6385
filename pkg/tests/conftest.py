import numpy as np
import pytest

from hopleg.dynamics import HIP_RANGE, KNEE_RANGE
from hopleg.model import default_leg_model


@pytest.fixture(scope="session")
def leg():
    return default_leg_model()


def random_states(n, seed=0, speed=10.0):
    rng = np.random.default_rng(seed)
    q = np.column_stack(
        [
            rng.uniform(0.2, 1.5, n),
            rng.uniform(*HIP_RANGE, n),
            rng.uniform(*KNEE_RANGE, n),
        ]
    )
    qd = rng.uniform(-speed, speed, (n, 3))
    return q, qd


# one line per acceptance check, printed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
