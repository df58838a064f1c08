import numpy as np
import pytest

from diffasym.grid import Grid
from diffasym.kernel import KernelSpec
from diffasym.semigroup import SemigroupOperator


@pytest.fixture(scope="session")
def heat_grid():
    return Grid(1, 60.0, 2048)


@pytest.fixture(scope="session")
def heat_spec():
    return KernelSpec.heat(1)


@pytest.fixture(scope="session")
def heat_op(heat_spec, heat_grid):
    return SemigroupOperator(heat_spec, heat_grid)


@pytest.fixture(scope="session")
def wide_heat_grid():
    # wide enough for t up to 1000 with moments to order 2
    return Grid(1, 400.0, 8192)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# One pass/fail line per acceptance criterion, aggregated over its tests.
_CRITERIA: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    number = dict(report.user_properties).get("criterion")
    if number is None:
        return
    detail = dict(report.user_properties).get("detail", "")
    _CRITERIA.setdefault(number, []).append((report.nodeid.split("::")[-1], report.passed, detail))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        rows = _CRITERIA[number]
        verdict = "PASS" if all(ok for _, ok, _ in rows) else "FAIL"
        details = "; ".join(d for _, _, d in rows if d)
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {details}")
