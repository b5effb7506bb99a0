import pytest

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Recorder for acceptance-criterion lines: ``record(num, title, passed, detail)``."""
    def record(num, title, passed, detail=""):
        ACCEPTANCE[num] = (title, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(format_line(num, title, ok, detail))


def format_line(num, title, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {title}: {detail}"
