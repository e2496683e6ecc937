import numpy as np
import pytest

from kinkflow.grid import GridSpec

# modest grid: kink width ~ 1.4 resolved by ~12 points, runs in milliseconds
SMALL = GridSpec(d=2, n_transverse=16, L_z=30.0, n_z=512)


@pytest.fixture
def small():
    return SMALL


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[n])
