import numpy as np
import pytest

from qhydro.integrator import InitialData
from qhydro.lattice import make_grid
from qhydro.runner import execute
from qhydro.scenarios import bundled_scenario

_RESULTS = {}


def scenario_result(name):
    """Execute a bundled scenario once per session."""
    if name not in _RESULTS:
        _RESULTS[name] = execute(bundled_scenario(name))
    return _RESULTS[name]


@pytest.fixture(scope="session")
def results():
    return scenario_result


def gaussian_init(grid, sigma=1.0, x0=0.0, p=0.0, **kw):
    a = grid.mesh()
    x0 = np.broadcast_to(np.asarray(x0, float), (grid.dim,)).reshape((-1,) + (1,) * grid.dim)
    p = np.broadcast_to(np.asarray(p, float), (grid.dim,)).reshape((-1,) + (1,) * grid.dim)
    r2 = np.sum((a - x0) ** 2, axis=0)
    rho0 = np.exp(-r2 / (2 * sigma ** 2)) / (2 * np.pi * sigma ** 2) ** (grid.dim / 2)
    return InitialData(rho0, S0=np.sum(p * a, axis=0), **kw)


@pytest.fixture
def grid1d():
    return make_grid(1, (-12, 12), 256)


@pytest.fixture
def grid2d():
    return make_grid(2, (-8, 8), 48)


ACCEPTANCE = {}


def gate(number, title, items):
    """Record one acceptance criterion and fail the calling test if any item misses.

    ``items`` is a list of ``(label, value, limit, lower)``; ``lower`` means the
    value must reach the limit from above.
    """
    misses = [(lbl, v, lim) for lbl, v, lim, lower in items
              if not (v >= lim if lower else v <= lim)]
    detail = "; ".join(f"{lbl}={v:.3e}" for lbl, v, _, _ in items)
    ACCEPTANCE[number] = (not misses, title, detail)
    assert not misses, f"criterion {number} ({title}) misses: {misses}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} "
                                    f"[{detail}]")
