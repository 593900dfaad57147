import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line for an acceptance criterion and print it."""

    def _report(number, title, ok, elapsed, budget, detail):
        within = budget is None or elapsed <= budget
        status = "PASS" if ok and within else "FAIL"
        limit = f" / {budget:.0f}s budget" if budget is not None else ""
        line = f"[criterion {number}] {status}  {title}: {detail}  ({elapsed:.2f}s{limit})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok and within

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
