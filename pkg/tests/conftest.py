import numpy as np
import pytest

from broomscan.balance import SequenceSample
from broomscan.raster import BANDS, BandId, MultibandRaster, RasterBand


def make_raster(shape=(4, 4), value=0.3, bands=BANDS, thermal_shape=None, pan_shape=None, units=None):
    out = {}
    for b in bands:
        s = shape
        if b is BandId.Thermal and thermal_shape:
            s = thermal_shape
        if b is BandId.Pan and pan_shape:
            s = pan_shape
        px = value(b, s) if callable(value) else np.full(s, value, dtype=np.float32)
        out[b] = RasterBand(b, px)
    return MultibandRaster(out, units or {})


def make_samples(n_pos, n_neg, steps=1, dim=49, seed=0, shift=0.0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_pos):
        out.append(SequenceSample(f"I{i:03d}", tuple(range(1, steps + 1)),
                                  rng.normal(shift, 1.0, (steps, dim)), "infected"))
    for i in range(n_neg):
        out.append(SequenceSample(f"H{i:03d}", tuple(range(1, steps + 1)),
                                  rng.normal(0.0, 1.0, (steps, dim)), "healthy"))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"criterion {criterion:>4}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
