import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.LOG:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.LOG, key=lambda s: s.split("criterion ")[1]):
        terminalreporter.write_line(line)
