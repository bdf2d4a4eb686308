import sys
from pathlib import Path

import numpy as np
import pytest

from watergenius.dataio import PatternSet

sys.path.insert(0, str(Path(__file__).parent))


def patterns_from(x, y):
    """Raw PatternSet treating every input column as a lag."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return PatternSet(x, np.asarray(y, dtype=np.float64).reshape(-1, 1), x.shape[1], False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance criteria report: one PASS/FAIL line per criterion at the end of the run.
_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed or (report.when == "call" and report.skipped)
    prev = _ACCEPTANCE.get(number, (title, True, 0.0))
    _ACCEPTANCE[number] = (title, prev[1] and not failed, prev[2] + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, seconds = _ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f}s)")
