import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from varcal.data import Dataset  # noqa: E402


def make_dataset(conf, correct, variables=None, k=2):
    """Dataset with given confidences (class 0 predicted) and correctness."""
    conf = np.asarray(conf, dtype=float)
    correct = np.asarray(correct, dtype=bool)
    n = conf.size
    rest = (1.0 - conf) / (k - 1)
    probs = np.repeat(rest[:, None], k, axis=1)
    probs[:, 0] = conf
    labels = np.where(correct, 0, 1)
    return Dataset(probs, labels, variables or {})


@pytest.fixture
def four_records():
    return make_dataset([0.6, 0.7, 0.8, 0.9], [1, 0, 1, 1], {"v": [1.0, 2.0, 3.0, 4.0]})


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
