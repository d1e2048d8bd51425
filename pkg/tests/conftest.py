import time

import pytest

from draftroute import bench as B
from draftroute.experiment import recipe

# criterion number -> (title, outcome, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion")


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to an acceptance test."""
    mark = request.node.get_closest_marker("criterion")

    def note(text: str) -> None:
        if mark is not None:
            ACCEPTANCE.setdefault(mark.args[0], [mark.args[1], None, ""])[2] = text

    return note


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    mark = getattr(report, "_criterion", None)
    if mark is None:
        return
    n, title = mark
    entry = ACCEPTANCE.setdefault(n, [title, None, ""])
    entry[1] = "PASS" if report.passed else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result()._criterion = mark.args


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, outcome, text = ACCEPTANCE[n]
        line = f"criterion {n:2d} {outcome or 'NOT RUN':4s}  {title}"
        if text:
            line += f"  [{text}]"
        terminalreporter.write_line(line)


# fixture name -> wall seconds spent building it, so acceptance runtimes
# can include shared setup
BUILD_SECONDS: dict[str, float] = {}


def _timed(name, fn):
    t0 = time.perf_counter()
    out = fn()
    BUILD_SECONDS[name] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def two_domain():
    """Stock two-domain pipeline with a trained router (built once)."""
    return _timed("two_domain", lambda: B.build_pipeline(recipe("two-domain")))


@pytest.fixture(scope="session")
def two_domain_bench(two_domain):
    return _timed("two_domain_bench", lambda: B.bench(two_domain.cfg, two_domain))


@pytest.fixture(scope="session")
def with_ar():
    return _timed("with_ar", lambda: B.build_pipeline(recipe("with-ar-arm")))
