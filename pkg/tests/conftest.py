import numpy as np
import pytest

CRITERIA: dict[str, list[str]] = {}
MEASURED: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        CRITERIA.setdefault(crit, []).append(report.outcome)
        MEASURED.setdefault(crit, []).extend(v for k, v in report.user_properties if k == "measured")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(CRITERIA, key=lambda c: (c[0] != "A", c)):
        outcomes = CRITERIA[name]
        if any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        checks = f"{len(outcomes)} check{'s' if len(outcomes) != 1 else ''}"
        detail = "; ".join(MEASURED.get(name, []))
        terminalreporter.write_line(f"{name}: {verdict} ({checks})" + (f"  {detail}" if detail else ""))


@pytest.fixture
def measured(request):
    """Attach a measured value to the acceptance summary line of the test's criterion."""
    return lambda text: request.node.user_properties.append(("measured", text))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
