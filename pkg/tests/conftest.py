import numpy as np
import pytest

from cpmg.band import build_band
from cpmg.geometry import Circle, Sphere, SplineCurve
from cpmg.problems import make_problem


@pytest.fixture(scope="session")
def circle():
    return Circle()


@pytest.fixture(scope="session")
def bean():
    return SplineCurve()


@pytest.fixture(scope="session")
def circle_grid(circle):
    return build_band(circle, 0.1)


@pytest.fixture(scope="session")
def sphere_grid():
    return build_band(Sphere(), 0.2)


@pytest.fixture(scope="session")
def circle_problem():
    return make_problem("circle")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# ---------------------------------------------------------------- acceptance report

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number n")


@pytest.fixture
def accept(request):
    """``accept(ok, detail)`` records and asserts the criterion of the calling test."""
    num = request.node.get_closest_marker("acceptance").args[0]
    lines = request.config.stash[_LINES]

    def record(ok, detail):
        lines[num] = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(lines[num])
        assert ok, detail

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark and rep.when == "call" and rep.failed:
        lines = item.config.stash[_LINES]
        num = mark.args[0]
        if num not in lines:
            msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
            lines[num] = f"criterion {num:>2}: FAIL  {call.excinfo.typename}: {msg}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
