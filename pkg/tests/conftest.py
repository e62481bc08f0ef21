import pytest

_LINES = []


@pytest.fixture
def acceptance_line():
    """Record one PASS/FAIL line for the terminal summary and print it."""

    def record(number, title, ok, elapsed, budget, detail=""):
        timely = elapsed < budget
        status = "PASS" if ok and timely else "FAIL"
        line = f"[{status}] criterion {number:>2}: {title} ({elapsed:.1f} s of {budget:g} s budget){' | ' + detail if detail else ''}"
        _LINES.append((number, line))
        print(line)
        return ok and timely

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
