import pytest

_VERDICTS: dict[int, str] = {}


class _Recorder:
    def __call__(self, number: int, passed, detail: str) -> None:
        status = "INFO" if passed is None else ("PASS" if passed else "FAIL")
        _VERDICTS[number] = f"criterion {number:>2}: {status}  {detail}"


@pytest.fixture
def verdict():
    """Record one acceptance line; the terminal summary prints them in order."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[n])
