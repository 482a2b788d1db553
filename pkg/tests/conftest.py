import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one check towards a numbered acceptance criterion."""

    def record(number: int, ok: bool, detail: str):
        _CRITERIA.setdefault(number, []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _CRITERIA[number]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        details = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {number}: {status}  ({details})")
