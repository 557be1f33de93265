import pytest
from hypothesis import HealthCheck, settings

from pinbounds import DisorderLaw, InterArrivalLaw

settings.register_profile(
    "pinbounds", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pinbounds")

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""
    store = request.config.stash[_ACCEPTANCE]

    def record(number, ok, detail):
        store[number] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        ok, detail = store[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def srw():
    return InterArrivalLaw.srw_return()


@pytest.fixture(scope="session")
def wet():
    return InterArrivalLaw.wetting_half_srw()


@pytest.fixture(scope="session")
def gauss():
    return DisorderLaw.gaussian()


@pytest.fixture(scope="session")
def coin():
    return DisorderLaw.binary()
