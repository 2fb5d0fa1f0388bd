import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    """Record the one-line verdict of an acceptance criterion."""
    def emit(k: int, passed: bool, text: str):
        line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {text}"
        _CRITERIA[k] = line
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
