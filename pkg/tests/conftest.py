import json
from pathlib import Path

import pytest

from rdpsim.probcore import MarkovJoint

GOLDEN = Path(__file__).parent / "golden"
VERDICTS = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def witness():
    """Region witness for Bern(0.3), Hamming, at R = 0.2 H(X), R_c = 0.25."""
    data = json.loads((GOLDEN / "codec_bern03_n4.json").read_text())
    return MarkovJoint.from_dict(data["witness"])


def pytest_configure(config):
    config.stash[VERDICTS] = {}
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def verdict(request):
    """Record and assert one acceptance line: ``verdict(ok, detail)``."""
    mark = request.node.get_closest_marker("criterion")
    number, title = mark.args
    table = request.config.stash[VERDICTS]

    def record(ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title} | {detail}"
        table[number] = line
        print(line)
        assert ok, line
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and rep.when == "call" and rep.failed:
        table = item.config.stash[VERDICTS]
        number, title = mark.args
        if number not in table:
            table[number] = f"FAIL  criterion {number:>2}: {title} | error: {call.excinfo.typename}"


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(VERDICTS, {})
    if table:
        terminalreporter.section("acceptance criteria")
        for number in sorted(table):
            terminalreporter.write_line(table[number])
