import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance_report():
    """Collects one ``(criterion, passed, detail)`` line per acceptance check."""

    def record(criterion: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.append((criterion, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"{crit}: {'PASS' if ok else 'FAIL'}  {detail}")
