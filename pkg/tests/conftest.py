import pytest

_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Log one PASS/FAIL line for an acceptance criterion; shown in the terminal summary."""

    def record(number, title, passed, detail):
        line = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
