import pytest

# acceptance results, printed once at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"AC{n} {'PASS' if ok else 'FAIL'}  {title}: {detail}")


@pytest.fixture
def acceptance():
    def record(n, ok, title, detail=""):
        ACCEPTANCE[n] = (bool(ok), title, detail)
        print(f"AC{n} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok
    return record
