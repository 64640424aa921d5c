from pathlib import Path

import pytest

from answerchange.ingest import CollapsedTally
from answerchange.response_model import ItemTally

DATA = Path(__file__).parent / "data"

# initial choice (rows) by final choice (columns), key D
ITEM1 = [
    [3039, 13, 25, 295],
    [8, 1426, 27, 109],
    [26, 21, 4263, 336],
    [37, 17, 57, 60086],
]

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def item1_tally() -> ItemTally:
    return ItemTally("1", 4, n_ww_retained=8728, n_ww_changed=120, n_wr=740, n_rw=111, n_rr=60086)


@pytest.fixture
def pooled_tally() -> CollapsedTally:
    return CollapsedTally(56587, 11543, 1454, 96481, n_examinees=2555, n_items=65)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    info = getattr(item, "acceptance_info", None)
    if info is None or report.when != "call":
        return
    status = "PASS" if report.passed else "FAIL"
    detail = info["detail"]
    if report.failed and not info.get("failed") and call.excinfo is not None:
        detail = f"{call.excinfo.typename}: {call.excinfo.value}"
    line = f"{status} {info['name']} ({report.duration:.2f}s) {detail}"
    ACCEPTANCE_LINES.append(line.rstrip())
