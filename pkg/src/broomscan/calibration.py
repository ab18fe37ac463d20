"""Empirical-line conversion of digital numbers to reflectance."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .raster import BandId, MultibandRaster, RasterBand

REFLECTANCE_CEILING = 2.0


@dataclass(frozen=True)
class PanelObservation:
    band: BandId
    mean_dn: float
    known_reflectance: float

    def __post_init__(self):
        if not self.mean_dn > 0:
            raise DataError(f"{self.band.name}: panel DN must be positive, got {self.mean_dn}")
        if not 0 < self.known_reflectance <= 1:
            raise DataError(
                f"{self.band.name}: panel reflectance must lie in (0, 1], got {self.known_reflectance}"
            )
        if self.band is BandId.Thermal:
            raise DataError("the thermal band is radiometric already and takes no panel calibration")


@dataclass(frozen=True)
class CalibrationModel:
    """Per-band linear map: reflectance = gain * DN + offset."""

    gains: dict
    offsets: dict

    def __call__(self, band: BandId, dn):
        return self.gains[band] * np.asarray(dn, dtype=np.float64) + self.offsets[band]


def fit_empirical_line(observations) -> CalibrationModel:
    """Fit one line per band.

    A band with a single distinct panel gets a line through the origin;
    two or more distinct panels get an ordinary least-squares line.
    """
    by_band = defaultdict(list)
    for obs in observations:
        by_band[obs.band].append(obs)
    if not by_band:
        raise DataError("no panel observations")
    gains, offsets = {}, {}
    for band, obs in by_band.items():
        dn = np.array([o.mean_dn for o in obs], dtype=np.float64)
        refl = np.array([o.known_reflectance for o in obs], dtype=np.float64)
        if np.unique(dn).size == 1:
            if np.unique(refl).size > 1:
                raise DataError(f"{band.name}: panels share DN {dn[0]} but disagree on reflectance")
            gain, offset = refl[0] / dn[0], 0.0
        else:
            dn_mean = dn.mean()
            refl_mean = refl.mean()
            gain = float(np.sum((dn - dn_mean) * (refl - refl_mean)) / np.sum((dn - dn_mean) ** 2))
            offset = float(refl_mean - gain * dn_mean)
        if not gain > 0:
            raise DataError(f"{band.name}: fitted gain {gain} is not positive")
        gains[band] = float(gain)
        offsets[band] = float(offset)
    return CalibrationModel(gains, offsets)


def apply_calibration(model: CalibrationModel, raster: MultibandRaster):
    """Convert every DN band to reflectance.

    Returns ``(calibrated_raster, clamp_counts)``. Values are clamped to
    [0, 2]; ``clamp_counts`` maps each calibrated band to the number of
    pixels that had to be clamped. Thermal passes through untouched.
    """
    bands, units, counts = {}, {}, {}
    for band, rb in raster.bands.items():
        if band is BandId.Thermal:
            bands[band] = rb
            units[band] = raster.units[band]
            continue
        if raster.units[band] != "digital-number":
            raise DataError(f"{band.name}: expected digital-number units, got {raster.units[band]}")
        if band not in model.gains:
            raise DataError(f"{band.name}: no calibration line for this band")
        refl = model(band, rb.pixels)
        finite = ~np.isnan(refl)
        outside = finite & ((refl < 0) | (refl > REFLECTANCE_CEILING))
        counts[band] = int(outside.sum())
        refl = np.where(finite, np.clip(refl, 0.0, REFLECTANCE_CEILING), np.nan)
        bands[band] = RasterBand(band, refl.astype(np.float32))
        units[band] = "reflectance"
    return MultibandRaster(bands, units), counts


def read_panels(path) -> list[PanelObservation]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(r for r in fh if not r.startswith("#")))
    except OSError as exc:
        raise DataError(f"cannot read panel file {path}: {exc}") from exc
    out = []
    for row in rows:
        try:
            out.append(
                PanelObservation(BandId.parse(row["band"]), float(row["mean_dn"]), float(row["known_reflectance"]))
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: malformed panel row {row}: {exc}") from exc
    return out


def write_panels(observations, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["band", "mean_dn", "known_reflectance"])
        for o in observations:
            wr.writerow([o.band.value, repr(float(o.mean_dn)), repr(float(o.known_reflectance))])
