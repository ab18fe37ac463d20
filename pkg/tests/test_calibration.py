import numpy as np
import pytest

from broomscan.calibration import (
    PanelObservation, apply_calibration, fit_empirical_line, read_panels, write_panels,
)
from broomscan.errors import DataError
from broomscan.raster import BandId, MultibandRaster, RasterBand

from conftest import make_raster


def test_single_panel_line_through_origin():
    m = fit_empirical_line([PanelObservation(BandId.Red, 32768, 0.5)])
    assert m.gains[BandId.Red] == 0.5 / 32768
    assert m.offsets[BandId.Red] == 0.0
    assert m(BandId.Red, 16384) == 0.25


def test_two_panel_least_squares_oracle(rng):
    m = fit_empirical_line([PanelObservation(BandId.NIR, 10000, 0.1), PanelObservation(BandId.NIR, 50000, 0.5)])
    assert m.gains[BandId.NIR] == pytest.approx(1e-5, rel=1e-12)
    assert m.offsets[BandId.NIR] == pytest.approx(0.0, abs=1e-12)
    for _ in range(50):
        dn = rng.uniform(1000, 60000, size=5)
        refl = np.clip(rng.uniform(1e-5, 1.1e-5) * dn + rng.normal(0, 0.01, 5), 0.01, 1.0)
        m = fit_empirical_line([PanelObservation(BandId.Green, d, r) for d, r in zip(dn, refl)])
        A = np.column_stack([dn, np.ones_like(dn)])
        g, o = np.linalg.lstsq(A, refl, rcond=None)[0]
        if g > 0:
            assert m.gains[BandId.Green] == pytest.approx(g, rel=1e-9)
            assert m.offsets[BandId.Green] == pytest.approx(o, rel=1e-7, abs=1e-12)


def test_panel_preconditions():
    with pytest.raises(DataError):
        PanelObservation(BandId.Red, 0, 0.5)
    with pytest.raises(DataError):
        PanelObservation(BandId.Red, 100, 1.2)
    with pytest.raises(DataError):
        PanelObservation(BandId.Thermal, 100, 0.5)
    with pytest.raises(DataError):
        fit_empirical_line([PanelObservation(BandId.Red, 100, 0.5), PanelObservation(BandId.Red, 100, 0.4)])
    with pytest.raises(DataError):
        fit_empirical_line([PanelObservation(BandId.Red, 100, 0.5), PanelObservation(BandId.Red, 200, 0.4)])


def _dn_raster(values, thermal=31.2):
    bands = {b: RasterBand(b, np.asarray(values, dtype=np.float32)) for b in (BandId.Red, BandId.NIR)}
    bands[BandId.Thermal] = RasterBand(BandId.Thermal, np.full((1, 1), thermal, dtype=np.float32))
    units = {BandId.Red: "digital-number", BandId.NIR: "digital-number"}
    return MultibandRaster(bands, units)


def test_apply_thermal_passthrough_and_clamp():
    model = fit_empirical_line([
        PanelObservation(BandId.Red, 10000, 0.1), PanelObservation(BandId.Red, 50000, 0.5),
        PanelObservation(BandId.NIR, 32768, 0.5),
    ])
    model.offsets[BandId.Red] = -0.02
    out, counts = apply_calibration(model, _dn_raster([[1000.0, 16384.0]]))
    assert out[BandId.Thermal].pixels[0, 0] == np.float32(31.2)
    assert out.units[BandId.Thermal] == "celsius"
    assert out[BandId.Red].pixels[0, 0] == 0.0
    assert counts[BandId.Red] == 1
    assert out[BandId.NIR].pixels[0, 1] == np.float32(0.25)
    assert counts[BandId.NIR] == 0
    assert out.units[BandId.NIR] == "reflectance"


def test_apply_requires_dn_units():
    model = fit_empirical_line([PanelObservation(BandId.Red, 100, 0.5)])
    with pytest.raises(DataError):
        apply_calibration(model, make_raster(bands=(BandId.Red,)))


def test_panels_csv_round_trip(tmp_path):
    obs = [PanelObservation(BandId.Red, 1234.5, 0.5), PanelObservation(BandId.Pan, 777.0, 0.25)]
    write_panels(obs, tmp_path / "p.csv")
    assert read_panels(tmp_path / "p.csv") == obs
