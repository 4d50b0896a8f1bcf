import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_grid():
    from swotcal.swath_geom import build_swath_grid

    # 3 columns per side, 24 rows
    return build_swath_grid(24, 2.0, 10.0, 14.0)


@pytest.fixture(scope="session")
def default_cfg():
    from swotcal import config

    return config.resolve({})


@pytest.fixture(scope="session")
def default_samples(default_cfg):
    from swotcal import osse

    return osse.simulate(default_cfg, 12, seed=21)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"criterion {n:2d}: {status} - {detail}")
