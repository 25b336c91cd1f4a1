import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

_REPORT: dict[int, str] = {}


class AcceptanceReport:
    def record(self, number: int, passed: bool, detail: str) -> bool:
        _REPORT[number] = f"CRITERION {number:2d} {'PASS' if passed else 'FAIL'}  {detail}"
        print(_REPORT[number])
        return passed


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceReport()


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_REPORT):
        terminalreporter.write_line(_REPORT[k])
