import pytest

_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Log one acceptance line; printed in the terminal summary."""

    def record(number, passed, detail):
        _ACCEPTANCE.append((number, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}")
