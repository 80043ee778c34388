import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Store one pass/fail line per acceptance criterion and print it immediately."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"{title}: {detail}"
        _RESULTS[number] = (passed, line)
        print(f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {line}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        passed, line = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}  {'PASS' if passed else 'FAIL'}  {line}")
