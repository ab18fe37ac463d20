"""Soil-adjusted vegetation index and canopy/soil segmentation.

Mask files hold a 12-byte header (magic ``CMSK``, little-endian uint32
width and height) followed by the row-major bits packed MSB-first.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .raster import BandId, MultibandRaster, RasterBand, resample_nearest

DEFAULT_L = 0.5
DEFAULT_TAU = 0.5
DENOMINATOR_GUARD = 1e-9
_MAGIC = b"CMSK"


def savi(nir: RasterBand, red: RasterBand, L: float = DEFAULT_L) -> np.ndarray:
    """Soil-adjusted vegetation index per pixel, (NIR - RED) / (NIR + RED + L) * (1 + L).

    Returns a float64 grid. Pixels where either input is nodata, or where
    the denominator is within 1e-9 of zero, come back as NaN.
    """
    if L < 0:
        raise DataError(f"soil adjustment factor must be >= 0, got {L}")
    if nir.shape != red.shape:
        raise DataError(f"NIR grid {nir.shape} and Red grid {red.shape} differ")
    n = nir.pixels.astype(np.float64)
    r = red.pixels.astype(np.float64)
    den = n + r + L
    bad = np.isnan(n) | np.isnan(r) | (np.abs(den) < DENOMINATOR_GUARD)
    safe = np.where(bad, 1.0, den)
    out = (n - r) / safe * (1.0 + L)
    out[bad] = np.nan
    return out


@dataclass(frozen=True)
class CanopyMask:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise DataError("mask must be 2-D")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def popcount(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        return isinstance(other, CanopyMask) and np.array_equal(self.bits, other.bits)

    __hash__ = None


def threshold_mask(index, tau: float = DEFAULT_TAU) -> CanopyMask:
    """Canopy where the index is strictly greater than ``tau``; NaN is soil."""
    index = np.asarray(index.pixels if isinstance(index, RasterBand) else index, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return CanopyMask(np.nan_to_num(index, nan=-np.inf) > tau)


def canopy_mask(raster: MultibandRaster, L: float = DEFAULT_L, tau: float = DEFAULT_TAU) -> CanopyMask:
    return threshold_mask(savi(raster[BandId.NIR], raster[BandId.Red], L), tau)


def apply_mask(raster: MultibandRaster, mask: CanopyMask) -> dict:
    """Canopy pixel values per band, row-major, with nodata dropped.

    Bands on a different grid (Thermal, Pan) are first resampled onto the
    mask grid by nearest neighbour.
    """
    out = {}
    for band, rb in raster.bands.items():
        if rb.shape != mask.bits.shape:
            rb = resample_nearest(rb, mask.width, mask.height)
        if rb.shape != mask.bits.shape:
            raise DataError(f"{band.name}: grid {rb.shape} does not match mask {mask.bits.shape}")
        vals = rb.pixels[mask.bits].astype(np.float64)
        out[band] = vals[~np.isnan(vals)]
    return out


def save_mask(mask: CanopyMask, path) -> None:
    payload = np.packbits(mask.bits.reshape(-1)).tobytes()
    Path(path).write_bytes(_MAGIC + struct.pack("<II", mask.width, mask.height) + payload)


def load_mask(path) -> CanopyMask:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from exc
    if len(data) < 12 or data[:4] != _MAGIC:
        raise DataError(f"{path}: not a canopy mask file")
    w, h = struct.unpack("<II", data[4:12])
    n = w * h
    if w < 1 or h < 1 or len(data) - 12 != (n + 7) // 8:
        raise DataError(f"{path}: mask payload does not match {w}x{h}")
    bits = np.unpackbits(np.frombuffer(data[12:], dtype=np.uint8), count=n).astype(bool)
    return CanopyMask(bits.reshape(h, w))
