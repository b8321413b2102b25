import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oos_error import MultiSourceDataset, NormalSourceParams  # noqa: E402

TABLE1_MEANS = (0.0, 2.0, 5.0)
TABLE1_VARS = (9.0, 1.0, 5.0)
TABLE1_P = (0.2, 0.3, 0.5)


@pytest.fixture
def tiny():
    return MultiSourceDataset.from_groups({"a": [0.0, 2.0], "b": [1.0, 3.0]})


@pytest.fixture
def table1():
    def make(n):
        return NormalSourceParams.create(TABLE1_MEANS, TABLE1_VARS, TABLE1_P, n)
    return make


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
