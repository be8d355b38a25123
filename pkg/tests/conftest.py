import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    """Store (and print) one pass/fail line for an acceptance criterion."""
    def record(number: int, name: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2} {name}: {'PASS' if passed else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
