import numpy as np
import pytest

from nncompress.gridfield import GridField4D


def make_field(shape=(3, 2, 7, 12), seed=0, lats=None, lons=None, values=None, name="f", units="u"):
    rng = np.random.default_rng(seed)
    nt, npres, nlat, nlon = shape
    times = np.arange(nt) * 6.0
    pressures = np.linspace(300.0, 850.0, npres) if npres > 1 else np.array([500.0])
    lats = np.linspace(-90.0, 90.0, nlat) if lats is None else np.asarray(lats, dtype=float)
    lons = np.arange(nlon) * (360.0 / nlon) if lons is None else np.asarray(lons, dtype=float)
    if values is None:
        values = rng.normal(size=shape)
    return GridField4D(name, units, times, pressures, lats, lons, np.asarray(values, dtype=np.float32))


@pytest.fixture
def small_field():
    return make_field()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
