from contextlib import contextmanager

import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Context manager recording a PASS/FAIL line for a numbered acceptance criterion."""

    @contextmanager
    def record(number: int, title: str):
        detail: dict = {}
        try:
            yield detail
        except BaseException:
            _CRITERIA[number] = _line(number, "FAIL", title, detail)
            raise
        _CRITERIA[number] = _line(number, "PASS", title, detail)

    return record


def _line(number, status, title, detail):
    extra = " ".join(f"{k}={v}" for k, v in detail.items())
    return f"criterion {number:2d}: {status}  {title}" + (f"  [{extra}]" if extra else "")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
