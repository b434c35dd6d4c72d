import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def report_line():
    """Record one acceptance verdict line; all lines are echoed at the end of the run."""

    def add(criterion: int, name: str, passed: bool, detail: str) -> None:
        line = f"criterion {criterion} [{name}]: {'PASS' if passed else 'FAIL'} - {detail}"
        _LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
