import math

import pytest

from rendezvous.hjb import DiskRegion, StationSet, solve_hjb

TARGET = DiskRegion((0.8, 0.5), 0.03)


@pytest.fixture(scope="session")
def disk_vf():
    return solve_hjb(TARGET, 0.05, 1.0)


@pytest.fixture(scope="session")
def station_vf():
    return solve_hjb(StationSet((0.5, 0.2), 0.03), 0.05, 0.3, direction="forward")


@pytest.fixture(scope="session")
def restricted_vf():
    return solve_hjb(StationSet((0.5, 0.2), 0.03, headings=(0.0, math.pi)), 0.05, 0.3,
                     direction="forward")


@pytest.fixture(scope="session")
def left_vf():
    """Leftmost destination of the shipped scenario at the true turning radius."""
    return solve_hjb(DiskRegion((0.15, 0.75), 0.03), 0.055, 1.0)


@pytest.fixture(scope="session")
def vf_cache(tmp_path_factory):
    """Value-function cache shared by the harness, CLI and acceptance tests.

    Set ``RENDEZVOUS_CACHE`` to reuse solves across test sessions.
    """
    import os

    from rendezvous.sim_harness import ValueFunctionCache

    root = os.environ.get("RENDEZVOUS_CACHE") or tmp_path_factory.mktemp("vfcache")
    return ValueFunctionCache(root)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Record ``criterion -> (passed, detail)`` for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
