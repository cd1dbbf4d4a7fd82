import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--run-large", action="store_true", default=False,
                     help="run full-scale simulations marked 'large'")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-large"):
        return
    skip = pytest.mark.skip(reason="needs --run-large")
    for item in items:
        if "large" in item.keywords:
            item.add_marker(skip)


_CRITERIA = []


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None or (report.when != "call" and not (report.skipped or report.failed)):
        return
    if report.when == "setup" and not report.failed and not report.skipped:
        return
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    case = report.nodeid.partition("[")[2].rstrip("]")
    _CRITERIA.append((crit[0], status, crit[1] + (f" [{case}]" if case else "")))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, text in sorted(_CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {num}: {status}  {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
