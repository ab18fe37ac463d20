"""Multiband plot rasters and the BSQ-F32 on-disk container.

A BSQ-F32 dataset is a UTF-8 JSON header plus one raw payload file per
band. Payloads are little-endian float32, row-major, band-sequential.

Header layout::

    {"format": "BSQ-F32", "version": 1,
     "bands": [{"name": "NIR", "width": 64, "height": 48,
                "units": "reflectance", "file": "scene.NIR.f32"}, ...]}

Plot regions are CSV with columns ``plant_id,x,y,w,h`` in pixels of the
multispectral grid.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError

FORMAT_NAME = "BSQ-F32"
FORMAT_VERSION = 1
UNITS = ("digital-number", "reflectance", "celsius")


class BandId(Enum):
    """The seven bands of the sensor, in feature-vector order."""

    Blue = "Blue"
    Green = "Green"
    Red = "Red"
    RedEdge = "RedEdge"
    NIR = "NIR"
    Thermal = "Thermal"
    Pan = "Pan"

    @property
    def wavelength(self) -> str:
        return _WAVELENGTHS[self]

    @property
    def is_multispectral(self) -> bool:
        return self in MULTISPECTRAL

    @classmethod
    def parse(cls, name: str) -> "BandId":
        try:
            return cls(name)
        except ValueError:
            raise DataError(f"unknown band name {name!r}") from None


_WAVELENGTHS = {
    BandId.Blue: "475 nm",
    BandId.Green: "560 nm",
    BandId.Red: "668 nm",
    BandId.RedEdge: "717 nm",
    BandId.NIR: "842 nm",
    BandId.Thermal: "LWIR 7.5-13.5 um",
    BandId.Pan: "panchromatic",
}
BANDS = tuple(BandId)
MULTISPECTRAL = (BandId.Blue, BandId.Green, BandId.Red, BandId.RedEdge, BandId.NIR)


@dataclass(frozen=True)
class RasterBand:
    """One band as a (height, width) float32 grid; NaN marks nodata."""

    band: BandId
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise DataError(f"{self.band.name}: pixel grid must be 2-D and non-empty, got shape {px.shape}")
        if np.isinf(px).any():
            raise DataError(f"{self.band.name}: infinite pixel values are not allowed")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class MultibandRaster:
    """A plot or scene: up to seven bands plus a units tag per band.

    Multispectral bands share one grid; Thermal and Pan may have their own.
    """

    bands: Mapping[BandId, RasterBand]
    units: Mapping[BandId, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.bands:
            raise DataError("a raster needs at least one band")
        bands = {b: self.bands[b] for b in BANDS if b in self.bands}
        units = {}
        for b, rb in bands.items():
            if rb.band is not b:
                raise DataError(f"band key {b.name} holds data tagged {rb.band.name}")
            u = self.units.get(b, "celsius" if b is BandId.Thermal else "reflectance")
            if u not in UNITS:
                raise DataError(f"{b.name}: unknown units tag {u!r}")
            units[b] = u
        ms_shapes = {bands[b].shape for b in MULTISPECTRAL if b in bands}
        if len(ms_shapes) > 1:
            raise DataError(f"multispectral bands disagree on grid size: {sorted(ms_shapes)}")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "units", units)

    def __getitem__(self, band: BandId) -> RasterBand:
        return self.bands[band]

    def __contains__(self, band: BandId) -> bool:
        return band in self.bands

    @property
    def grid_shape(self) -> tuple[int, int]:
        """(height, width) of the multispectral grid."""
        for b in MULTISPECTRAL:
            if b in self.bands:
                return self.bands[b].shape
        raise DataError("raster has no multispectral band to define the reference grid")

    def replace(self, bands=None, units=None) -> "MultibandRaster":
        new_bands = dict(self.bands)
        new_bands.update(bands or {})
        new_units = dict(self.units)
        new_units.update(units or {})
        return MultibandRaster(new_bands, new_units)


@dataclass(frozen=True)
class PlotRegion:
    plant_id: str
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise DataError(f"region {self.plant_id}: width and height must be >= 1")
        if self.x < 0 or self.y < 0:
            raise DataError(f"region {self.plant_id}: negative origin")


def save_raster(raster: MultibandRaster, path) -> None:
    """Write ``raster`` as a BSQ-F32 header at ``path`` plus one payload per band."""
    if not raster.bands:
        raise DataError("cannot save a raster with no bands")
    path = Path(path)
    stem = path.name[:-5] if path.name.endswith(".json") else path.name
    entries = []
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        for b, rb in raster.bands.items():
            fname = f"{stem}.{b.value}.f32"
            rb.pixels.astype("<f4").tofile(path.parent / fname)
            entries.append(
                {"name": b.value, "width": rb.width, "height": rb.height,
                 "units": raster.units[b], "file": fname}
            )
        header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "bands": entries}
        path.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write raster to {path}: {exc}") from exc


def load_raster(path) -> MultibandRaster:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"raster header not found: {path}")
    try:
        header = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: header is not valid JSON: {exc}") from exc
    if header.get("format") != FORMAT_NAME:
        raise DataError(f"{path}: not a {FORMAT_NAME} header")
    bands, units = {}, {}
    for entry in header.get("bands", []):
        b = BandId.parse(entry.get("name"))
        if b in bands:
            raise DataError(f"{path}: band {b.name} declared twice")
        w, h = entry.get("width"), entry.get("height")
        if not all(isinstance(v, (int, float)) and math.isfinite(v) and v >= 1 and v == int(v) for v in (w, h)):
            raise DataError(f"{path}: band {b.name} has invalid dimensions {w}x{h}")
        w, h = int(w), int(h)
        payload = path.parent / entry["file"]
        if not payload.is_file():
            raise DataError(f"{path}: payload file missing: {payload}")
        data = np.fromfile(payload, dtype="<f4")
        if data.size != w * h:
            raise DataError(
                f"{path}: band {b.name} payload holds {data.size} floats, header declares {w}x{h}={w * h}"
            )
        bands[b] = RasterBand(b, data.reshape(h, w).astype(np.float32))
        units[b] = entry.get("units", "reflectance")
    if not bands:
        raise DataError(f"{path}: header declares no bands")
    return MultibandRaster(bands, units)


def _check_region(region: PlotRegion, shape: tuple[int, int]) -> None:
    h, w = shape
    if region.x + region.w > w or region.y + region.h > h:
        raise DataError(
            f"region {region.plant_id} ({region.x},{region.y},{region.w},{region.h}) "
            f"exceeds the {w}x{h} grid"
        )


def scaled_box(region: PlotRegion, ref_shape, band_shape) -> tuple[int, int, int, int]:
    """Map a box on the reference grid onto another grid, rounding outward.

    Returns ``(x0, y0, x1, y1)`` with exclusive upper bounds.
    """
    sy = band_shape[0] / ref_shape[0]
    sx = band_shape[1] / ref_shape[1]
    x0 = math.floor(region.x * sx)
    y0 = math.floor(region.y * sy)
    x1 = min(band_shape[1], math.ceil((region.x + region.w) * sx))
    y1 = min(band_shape[0], math.ceil((region.y + region.h) * sy))
    return x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)


def crop(raster: MultibandRaster, region: PlotRegion) -> MultibandRaster:
    """Cut one plot out of a scene.

    Multispectral bands are cropped at the box itself. Thermal and Pan are
    cropped at the box scaled to their own grid, rounded outward, so the
    same ground footprint is kept.
    """
    ref = raster.grid_shape
    _check_region(region, ref)
    out = {}
    for b, rb in raster.bands.items():
        if rb.shape == ref:
            x0, y0, x1, y1 = region.x, region.y, region.x + region.w, region.y + region.h
        else:
            x0, y0, x1, y1 = scaled_box(region, ref, rb.shape)
        out[b] = RasterBand(b, rb.pixels[y0:y1, x0:x1])
    return MultibandRaster(out, raster.units)


def resample_nearest(band: RasterBand, target_w: int, target_h: int) -> RasterBand:
    """Nearest-neighbour resample; output (i, j) reads source row
    floor((i + 0.5) * src_h / target_h) and column floor((j + 0.5) * src_w / target_w)."""
    if target_w < 1 or target_h < 1:
        raise DataError("resample target must be at least 1x1")
    if (target_h, target_w) == band.shape:
        return band
    sh = band.height / target_h
    sw = band.width / target_w
    rows = np.minimum(np.floor((np.arange(target_h) + 0.5) * sh).astype(np.int64), band.height - 1)
    cols = np.minimum(np.floor((np.arange(target_w) + 0.5) * sw).astype(np.int64), band.width - 1)
    return RasterBand(band.band, band.pixels[np.ix_(rows, cols)])


def read_regions(path) -> list[PlotRegion]:
    regions = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in fh if not r.startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read regions file {path}: {exc}") from exc
    for row in csv.DictReader(rows):
        try:
            regions.append(
                PlotRegion(row["plant_id"], int(row["x"]), int(row["y"]), int(row["w"]), int(row["h"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed region row {row}: {exc}") from exc
    return regions


def write_regions(regions, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["plant_id", "x", "y", "w", "h"])
        for r in regions:
            wr.writerow([r.plant_id, r.x, r.y, r.w, r.h])


def raster_files(path) -> list[str]:
    """Header plus payload file names belonging to a saved raster."""
    path = Path(path)
    header = json.loads(path.read_text(encoding="utf-8"))
    return [path.name] + [e["file"] for e in header["bands"]]


__all__ = [
    "BandId", "BANDS", "MULTISPECTRAL", "UNITS", "RasterBand", "MultibandRaster", "PlotRegion",
    "load_raster", "save_raster", "crop", "resample_nearest", "scaled_box",
    "read_regions", "write_regions", "raster_files",
]
