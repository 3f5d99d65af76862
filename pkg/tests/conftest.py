import pytest

_ACCEPTANCE: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the test still asserts on its own."""

    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"[{number}] {'PASS' if passed else 'FAIL'} {name}" + (f": {detail}" if detail else "")
        print(line)
        _ACCEPTANCE.append((number, name, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{number}] {status} {name}" + (f": {detail}" if detail else ""))
