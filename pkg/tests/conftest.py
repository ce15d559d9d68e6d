import numpy as np
import pytest

from sulfatation.config import default_config


@pytest.fixture
def small_cfg():
    return default_config().replace(grid={"nx": 6, "ny": 5})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS, key=lambda k: int(k[1:])):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"[{key}] {'PASS' if ok else 'FAIL'}: {detail}")
