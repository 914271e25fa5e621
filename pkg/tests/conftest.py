import numpy as np
import pytest

from phaselab.biphoton import DGSource

UM = 1e-6
MM = 1e-3


@pytest.fixture
def src():
    """Single-lens experiment source: 140.2 um / 12.6 um at 810 nm."""
    return DGSource(140.2 * UM, 12.6 * UM, 810e-9)


@pytest.fixture
def src_ds():
    """Double-slit experiment source: 326 um / 9 um at 810 nm."""
    return DGSource(326 * UM, 9 * UM, 810e-9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
