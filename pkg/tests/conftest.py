import pytest

_LOG = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance criterion for the summary."""
    return request.config.stash.setdefault(_LOG, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LOG, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
