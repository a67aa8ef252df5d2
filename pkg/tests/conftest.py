import pytest

# criterion number -> report line, filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str, seconds: float):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}  [{seconds:.1f} s]"
        ACCEPTANCE[number] = line
        print(line)
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
