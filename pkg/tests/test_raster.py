import json

import numpy as np
import pytest

from broomscan.errors import DataError
from broomscan.raster import (
    BANDS, BandId, MultibandRaster, PlotRegion, RasterBand, crop, load_raster, raster_files, read_regions,
    resample_nearest, save_raster, scaled_box, write_regions,
)

from conftest import make_raster


def test_band_enum_has_seven_unique_members():
    assert len(BANDS) == 7
    assert len({b.value for b in BANDS}) == 7
    assert BandId.parse("NIR") is BandId.NIR
    with pytest.raises(DataError):
        BandId.parse("UV")


def test_raster_band_rejects_inf_and_is_read_only():
    with pytest.raises(DataError):
        RasterBand(BandId.Red, np.array([[1.0, np.inf]]))
    rb = RasterBand(BandId.Red, np.array([[1.0, np.nan]]))
    assert rb.width == 2 and rb.height == 1
    with pytest.raises(ValueError):
        rb.pixels[0, 0] = 2.0


def test_multispectral_grids_must_agree():
    with pytest.raises(DataError):
        MultibandRaster({BandId.Red: RasterBand(BandId.Red, np.zeros((4, 4))),
                         BandId.NIR: RasterBand(BandId.NIR, np.zeros((3, 4)))})
    r = make_raster(thermal_shape=(2, 2), pan_shape=(8, 8))
    assert r.grid_shape == (4, 4)


def test_empty_raster_is_an_error():
    with pytest.raises(DataError):
        MultibandRaster({})


def test_two_band_file_loads(tmp_path):
    r = make_raster(bands=(BandId.Red, BandId.NIR))
    save_raster(r, tmp_path / "s.json")
    back = load_raster(tmp_path / "s.json")
    assert list(back.bands) == [BandId.Red, BandId.NIR]
    assert all(rb.pixels.size == 16 for rb in back.bands.values())


def test_seven_band_file_has_seven_payloads(tmp_path):
    save_raster(make_raster(), tmp_path / "s.json")
    files = raster_files(tmp_path / "s.json")
    assert len(files) == 8
    assert sorted(p.name for p in tmp_path.iterdir()) == sorted(files)


def test_payload_size_mismatch(tmp_path):
    save_raster(make_raster(bands=(BandId.Red,)), tmp_path / "s.json")
    np.zeros(15, dtype="<f4").tofile(tmp_path / "s.Red.f32")
    with pytest.raises(DataError, match="15 floats"):
        load_raster(tmp_path / "s.json")


def test_header_format_is_checked(tmp_path):
    (tmp_path / "x.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(DataError):
        load_raster(tmp_path / "x.json")


def test_round_trip_is_bit_exact(tmp_path, rng):
    for i in range(5):
        px = rng.normal(size=(7, 5)).astype(np.float32)
        px[rng.random(px.shape) < 0.1] = np.nan
        r = make_raster(shape=(7, 5), value=lambda b, s: px, thermal_shape=(2, 2))
        save_raster(r, tmp_path / f"r{i}.json")
        back = load_raster(tmp_path / f"r{i}.json")
        for b in r.bands:
            assert back[b].pixels.tobytes() == r[b].pixels.tobytes()
            assert back.units[b] == r.units[b]


def test_full_extent_crop_is_identity(rng):
    px = rng.random((4, 4)).astype(np.float32)
    r = make_raster(value=lambda b, s: px)
    c = crop(r, PlotRegion("p", 0, 0, 4, 4))
    for b in r.bands:
        np.testing.assert_array_equal(c[b].pixels, r[b].pixels)


def test_two_by_two_crop():
    px = np.arange(16, dtype=np.float32).reshape(4, 4)
    c = crop(make_raster(bands=(BandId.Red,), value=lambda b, s: px), PlotRegion("p", 1, 2, 2, 2))
    np.testing.assert_array_equal(c[BandId.Red].pixels, [[9, 10], [13, 14]])


def test_thermal_box_scales():
    assert scaled_box(PlotRegion("p", 2, 2, 4, 4), (10, 10), (5, 5)) == (1, 1, 3, 3)
    r = make_raster(shape=(10, 10), thermal_shape=(5, 5))
    assert crop(r, PlotRegion("p", 2, 2, 4, 4))[BandId.Thermal].shape == (2, 2)


def test_scaled_box_rounds_outward(rng):
    for _ in range(200):
        ref = (int(rng.integers(4, 40)), int(rng.integers(4, 40)))
        f = int(rng.integers(1, 5))
        band = (max(1, ref[0] // f), max(1, ref[1] // f))
        w, h = int(rng.integers(1, ref[1] + 1)), int(rng.integers(1, ref[0] + 1))
        x, y = int(rng.integers(0, ref[1] - w + 1)), int(rng.integers(0, ref[0] - h + 1))
        x0, y0, x1, y1 = scaled_box(PlotRegion("p", x, y, w, h), ref, band)
        sx, sy = band[1] / ref[1], band[0] / ref[0]
        assert x0 <= x * sx + 1e-12 and y0 <= y * sy + 1e-12
        assert x1 >= min(band[1], (x + w) * sx) - 1e-12 and y1 >= min(band[0], (y + h) * sy) - 1e-12
        assert 0 <= x0 < x1 <= band[1] and 0 <= y0 < y1 <= band[0]


def test_region_outside_scene():
    with pytest.raises(DataError):
        crop(make_raster(), PlotRegion("p", 2, 2, 4, 4))
    with pytest.raises(DataError):
        PlotRegion("p", 0, 0, 0, 1)


def test_resample_same_size_and_constant():
    rb = RasterBand(BandId.Red, np.array([[3.0]]))
    np.testing.assert_array_equal(resample_nearest(rb, 3, 3).pixels, np.full((3, 3), 3.0))
    rb2 = RasterBand(BandId.Red, np.arange(6.0).reshape(2, 3))
    assert resample_nearest(rb2, 3, 2) is rb2


def test_resample_checkerboard_replicates_blocks():
    src = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = resample_nearest(RasterBand(BandId.Pan, src), 4, 4).pixels
    oracle = np.array([[src[i // 2, j // 2] for j in range(4)] for i in range(4)])
    np.testing.assert_array_equal(out, oracle)


def test_regions_csv_round_trip(tmp_path):
    regs = [PlotRegion("a", 0, 0, 2, 3), PlotRegion("b", 4, 1, 5, 5)]
    write_regions(regs, tmp_path / "r.csv")
    assert read_regions(tmp_path / "r.csv") == regs
    (tmp_path / "bad.csv").write_text("plant_id,x,y,w,h\na,1,2,x,4\n")
    with pytest.raises(DataError):
        read_regions(tmp_path / "bad.csv")
