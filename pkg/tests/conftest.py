import pytest

_criteria = pytest.StashKey[dict]()


@pytest.fixture
def report(request):
    """``report(n, name, passed, measured, bound)``: record a criterion line, then assert."""
    lines = request.config.stash.setdefault(_criteria, {})

    def emit(number, name, passed, measured, bound):
        line = f"[{'PASS' if passed else 'FAIL'}] {number} {name}: {measured} ({bound})"
        lines[number] = line
        print("\n" + line)
        assert passed, line

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_criteria, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
