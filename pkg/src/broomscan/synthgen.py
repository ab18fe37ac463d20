"""Synthetic fields with known labels, for exercising the whole pipeline.

Plants sit on a regular grid of square plots. Each plant is a disc of
canopy over a soil background; canopy pixels are drawn per band from
Gaussians whose means depend on the growth stage, on a persistent
per-plant offset and, for infected plants, on the configured infection
effects (NIR down, red edge down, canopy temperature up).

The thermal band is generated on the multispectral grid and block-averaged
down by ``thermal_factor`` (mixed pixels included); Pan is drawn directly
on a grid ``pan_factor`` times finer.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .calibration import PanelObservation
from .errors import DataError
from .phenology import DEFAULT_TARGETS, DailyWeather, accumulate
from .raster import BANDS, BandId, MultibandRaster, PlotRegion, RasterBand

_REFL_BANDS = (BandId.Blue, BandId.Green, BandId.Red, BandId.RedEdge, BandId.NIR, BandId.Pan)
REFLECTANCE_RANGE = (0.0, 1.5)
THERMAL_RANGE = (0.0, 60.0)
PANEL_REFLECTANCE = 0.5


def _bands(**kw):
    return {b.value: float(kw[b.value]) for b in BANDS if b.value in kw}


@dataclass(frozen=True)
class SynthConfig:
    n_plants: int = 300
    infected_fraction: float = 49 / 300
    stages: tuple = DEFAULT_TARGETS
    plot_size: int = 16
    columns: int = 20
    thermal_factor: int = 4
    pan_factor: int = 2
    canopy_cover: tuple = (0.15, 0.22, 0.30, 0.38, 0.45)
    healthy_mean: dict = field(default_factory=lambda: _bands(
        Blue=0.04, Green=0.09, Red=0.05, RedEdge=0.26, NIR=0.50, Pan=0.12, Thermal=28.0))
    # added to healthy NIR / RedEdge at each stage (canopy development)
    stage_growth: tuple = (0.0, 0.01, 0.02, 0.03, 0.04)
    soil_mean: dict = field(default_factory=lambda: _bands(
        Blue=0.08, Green=0.11, Red=0.15, RedEdge=0.18, NIR=0.20, Pan=0.13, Thermal=40.0))
    pixel_noise: dict = field(default_factory=lambda: _bands(
        Blue=0.005, Green=0.008, Red=0.005, RedEdge=0.012, NIR=0.02, Pan=0.008, Thermal=0.6))
    plant_noise: dict = field(default_factory=lambda: _bands(
        Blue=0.004, Green=0.006, Red=0.004, RedEdge=0.015, NIR=0.025, Pan=0.006, Thermal=0.9))
    soil_noise: dict = field(default_factory=lambda: _bands(
        Blue=0.005, Green=0.005, Red=0.008, RedEdge=0.008, NIR=0.01, Pan=0.005, Thermal=1.0))
    nir_drop: tuple = (0.0, 0.008, 0.016, 0.024, 0.032)
    rededge_shift: tuple = (0.0, 0.004, 0.008, 0.012, 0.016)
    thermal_rise: tuple = (0.0, 0.3, 0.6, 0.9, 1.2)
    season_days: int = 150
    season_start: str = "2023-04-20"
    seed: int = 0

    def __post_init__(self):
        n = len(self.stages)
        object.__setattr__(self, "stages", tuple(float(s) for s in self.stages))
        for name in ("canopy_cover", "stage_growth", "nir_drop", "rededge_shift", "thermal_rise"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if len(vals) != n:
                raise DataError(f"{name} needs one value per stage ({n}), got {len(vals)}")
        for name in ("nir_drop", "rededge_shift", "thermal_rise"):
            vals = getattr(self, name)
            if min(vals) < 0 or any(b < a for a, b in zip(vals, vals[1:])):
                raise DataError(f"{name} must be non-negative and nondecreasing across stages")
        if not 0 < self.infected_fraction < 1:
            raise DataError("infected_fraction must lie in (0, 1)")
        if not all(0 < c < 1 for c in self.canopy_cover):
            raise DataError("canopy_cover fractions must lie in (0, 1)")
        if self.n_plants < 2 or self.columns < 1:
            raise DataError("need at least 2 plants and 1 column")
        if self.plot_size < 2 or self.plot_size % self.thermal_factor:
            raise DataError("plot_size must be >= 2 and a multiple of thermal_factor")
        for name in ("pixel_noise", "plant_noise", "soil_noise"):
            if min(getattr(self, name).values()) < 0:
                raise DataError(f"{name} values must be >= 0")

    @property
    def n_infected(self) -> int:
        return int(round(self.n_plants * self.infected_fraction))

    @property
    def rows(self) -> int:
        return math.ceil(self.n_plants / self.columns)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.rows * self.plot_size, self.columns * self.plot_size

    def scaled_effects(self, factor: float) -> "SynthConfig":
        """Same field with every infection effect multiplied by ``factor``."""
        return replace(
            self,
            nir_drop=tuple(factor * v for v in self.nir_drop),
            rededge_shift=tuple(factor * v for v in self.rededge_shift),
            thermal_rise=tuple(factor * v for v in self.thermal_rise),
        )

    def noiseless(self) -> "SynthConfig":
        zero = {k: 0.0 for k in self.pixel_noise}
        return replace(self, pixel_noise=zero, plant_noise=dict(zero), soil_noise=dict(zero))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown synth config keys: {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            if isinstance(getattr(base, k), dict):
                merged[k] = {**getattr(base, k), **v}
            else:
                merged[k] = v
        return cls(**merged)


EFFECT_PRESETS = {"zero": 0.0, "moderate": 1.0, "strong": 4.0}


def preset(name: str, **overrides) -> SynthConfig:
    if name not in EFFECT_PRESETS:
        raise DataError(f"unknown preset {name!r}; choose from {sorted(EFFECT_PRESETS)}")
    return SynthConfig(**overrides).scaled_effects(EFFECT_PRESETS[name])


@dataclass
class GroundTruth:
    labels: dict
    regions: list
    masks: dict
    stage: float
    clamped: dict = field(default_factory=dict)


def _rng(config: SynthConfig, *key):
    return np.random.default_rng([config.seed, *key])


def plant_ids(config: SynthConfig) -> list[str]:
    return [f"P{i:04d}" for i in range(config.n_plants)]


def plant_labels(config: SynthConfig) -> dict:
    """Exactly ``n_infected`` plants, chosen by the seed, are infected."""
    ids = plant_ids(config)
    chosen = set(_rng(config, 0).permutation(len(ids))[: config.n_infected].tolist())
    return {pid: ("infected" if i in chosen else "healthy") for i, pid in enumerate(ids)}


def plant_offsets(config: SynthConfig) -> np.ndarray:
    """Persistent per-plant deviation from the class mean, (n_plants, 7) in BANDS order."""
    std = np.array([config.plant_noise[b.value] for b in BANDS])
    return _rng(config, 1).normal(0.0, 1.0, size=(config.n_plants, len(BANDS))) * std


def plant_regions(config: SynthConfig) -> list[PlotRegion]:
    s = config.plot_size
    return [
        PlotRegion(pid, (i % config.columns) * s, (i // config.columns) * s, s, s)
        for i, pid in enumerate(plant_ids(config))
    ]


def _disc(size: int, radius: float, scale: int = 1) -> np.ndarray:
    """Boolean disc centred in a size*scale square; radius in base pixels."""
    n = size * scale
    c = (np.arange(n) + 0.5) / scale
    d2 = (c[None, :] - size / 2) ** 2 + (c[:, None] - size / 2) ** 2
    return d2 <= radius * radius


def canopy_means(config: SynthConfig, stage_index: int, infected: bool) -> dict:
    """Class mean per band at one stage."""
    m = dict(config.healthy_mean)
    g = config.stage_growth[stage_index]
    m["NIR"] += g
    m["RedEdge"] += g / 2
    if infected:
        m["NIR"] -= config.nir_drop[stage_index]
        m["RedEdge"] -= config.rededge_shift[stage_index]
        m["Thermal"] += config.thermal_rise[stage_index]
    return m


def gen_field(config: SynthConfig, stage_index: int):
    """Scene raster (reflectance, Thermal in celsius) and its ground truth for one stage."""
    if not 0 <= stage_index < len(config.stages):
        raise DataError(f"stage_index {stage_index} out of range")
    H, W = config.grid_shape
    s = config.plot_size
    pf, tf = config.pan_factor, config.thermal_factor
    rng = _rng(config, 2, stage_index)
    labels = plant_labels(config)
    offsets = plant_offsets(config)
    regions = plant_regions(config)
    radius = s * math.sqrt(config.canopy_cover[stage_index] / math.pi)
    disc = _disc(s, radius)
    disc_pan = _disc(s, radius, pf)

    grids = {}
    for b in BANDS:
        scale = pf if b is BandId.Pan else 1
        mean, sd = config.soil_mean[b.value], config.soil_noise[b.value]
        grids[b] = mean + sd * rng.standard_normal((H * scale, W * scale))

    masks = {}
    for i, region in enumerate(regions):
        infected = labels[region.plant_id] == "infected"
        means = canopy_means(config, stage_index, infected)
        masks[region.plant_id] = disc.copy()
        for bi, b in enumerate(BANDS):
            scale = pf if b is BandId.Pan else 1
            m = disc_pan if b is BandId.Pan else disc
            y0, x0 = region.y * scale, region.x * scale
            block = grids[b][y0 : y0 + s * scale, x0 : x0 + s * scale]
            mu = means[b.value] + offsets[i, bi]
            block[m] = mu + config.pixel_noise[b.value] * rng.standard_normal(int(m.sum()))

    clamped = {}
    bands = {}
    for b in BANDS:
        lo, hi = THERMAL_RANGE if b is BandId.Thermal else REFLECTANCE_RANGE
        g = grids[b]
        clamped[b.value] = int(np.sum((g < lo) | (g > hi)))
        g = np.clip(g, lo, hi)
        if b is BandId.Thermal:
            g = g.reshape(H // tf, tf, W // tf, tf).mean(axis=(1, 3))
        bands[b] = RasterBand(b, g.astype(np.float32))
    units = {b: ("celsius" if b is BandId.Thermal else "reflectance") for b in BANDS}
    truth = GroundTruth(labels, regions, masks, config.stages[stage_index], clamped)
    return MultibandRaster(bands, units), truth


def sensor_gains(config: SynthConfig) -> dict:
    """Digital numbers per unit reflectance, per calibrated band."""
    base = {"Blue": 30000.0, "Green": 28000.0, "Red": 26000.0, "RedEdge": 24000.0, "NIR": 22000.0, "Pan": 32000.0}
    return {BandId(k): v for k, v in base.items()}


def to_digital_numbers(raster: MultibandRaster, gains: dict) -> MultibandRaster:
    """Inverse calibration: reflectance * gain, rounded to whole DNs. Thermal untouched."""
    bands, units = {}, {}
    for b, rb in raster.bands.items():
        if b is BandId.Thermal:
            bands[b], units[b] = rb, raster.units[b]
            continue
        bands[b] = RasterBand(b, np.round(rb.pixels.astype(np.float64) * gains[b]).astype(np.float32))
        units[b] = "digital-number"
    return MultibandRaster(bands, units)


def panel_observations(gains: dict, reflectance: float = PANEL_REFLECTANCE) -> list[PanelObservation]:
    return [PanelObservation(b, round(reflectance * g), reflectance) for b, g in gains.items()]


def gen_weather(config: SynthConfig) -> list[DailyWeather]:
    """Daily extremes: seasonal sinusoid plus noise, feasible for every stage target."""
    n = config.season_days
    if n < len(config.stages):
        raise DataError("season shorter than the number of stages")
    rng = _rng(config, 3)
    start = dt.date.fromisoformat(config.season_start)
    d = np.arange(n)
    mean = 21.0 + 6.0 * np.sin(np.pi * (d + 0.5) / n) + rng.normal(0.0, 1.5, n)
    half_range = 6.5 + rng.uniform(-1.5, 1.5, n)
    weather = [
        DailyWeather(start + dt.timedelta(days=int(i)), round(float(mean[i] - half_range[i]), 2),
                     round(float(mean[i] + half_range[i]), 2))
        for i in range(n)
    ]
    reached = accumulate(weather).cumulative[-1]
    if reached < max(config.stages):
        raise DataError(
            f"season of {n} days accumulates only {reached:.0f} GDD, short of target {max(config.stages):g}"
        )
    return weather
