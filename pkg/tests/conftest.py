import pytest

# filled by test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(number: int, title: str, passed: bool, detail: str):
        line = f"[acceptance {number}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[number] = (passed, line)
        with capsys.disabled():
            print("\n" + line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n][1])
