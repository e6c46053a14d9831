import pytest

_ACCEPT = pytest.StashKey[list]()


@pytest.fixture
def accept(request):
    """Record one acceptance line ``[C<k>] PASS|FAIL title: detail`` and assert it."""
    lines = request.config.stash.setdefault(_ACCEPT, [])

    def record(cid: int, title: str, ok: bool, detail: str):
        line = f"[C{cid:02d}] {'PASS' if ok else 'FAIL'} {title}: {detail}"
        print(line)
        lines.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
