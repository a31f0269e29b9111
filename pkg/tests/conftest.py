import sys
from pathlib import Path

import pytest

# shared helpers (circuits.py, gradcheck.py) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """verdict(number, title, ok, detail) records one acceptance line and asserts ok."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}  {title}" + (f"  [{detail}]" if detail else "")
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
