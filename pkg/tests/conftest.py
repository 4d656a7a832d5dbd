import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; returns ``passed`` so the test can assert on it."""
    def record(number, title, passed, detail=""):
        _CRITERIA[number] = (title, bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
