import numpy as np
import pytest

from msbitrate.frameio import LumaFrame

_criteria = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_frame(rng, width, height, index=0):
    return LumaFrame(rng.integers(0, 256, size=(height, width), dtype=np.uint8), index)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _criteria.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _criteria:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}  ({duration:.1f}s)")
