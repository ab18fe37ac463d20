"""Scene-level processing: crop each plot, mask the canopy, extract features."""
from __future__ import annotations

import logging

from .canopy import DEFAULT_L, DEFAULT_TAU, apply_mask, canopy_mask
from .errors import EmptyCanopyError
from .features import FeatureConfig, FeatureRecord, extract_plant_features
from .raster import crop

log = logging.getLogger(__name__)


def plot_features(plot, config: FeatureConfig | None = None, L: float = DEFAULT_L, tau: float = DEFAULT_TAU,
                  mask=None):
    """Feature vector of one cropped plot; the mask is computed from SAVI unless given."""
    mask = canopy_mask(plot, L, tau) if mask is None else mask
    return extract_plant_features(apply_mask(plot, mask), config)


def extract_field_features(scene, regions, labels: dict, stage: float, config: FeatureConfig | None = None,
                           L: float = DEFAULT_L, tau: float = DEFAULT_TAU):
    """Feature records for every labelled plot in ``scene``.

    Returns ``(records, skipped)`` where ``skipped`` lists plant ids whose
    canopy mask came out empty in some band at this stage.
    """
    records, skipped = [], []
    for region in regions:
        if region.plant_id not in labels:
            continue
        try:
            vec = plot_features(crop(scene, region), config, L, tau)
        except EmptyCanopyError:
            skipped.append(region.plant_id)
            continue
        records.append(FeatureRecord(region.plant_id, stage, labels[region.plant_id], vec))
    if skipped:
        log.warning("stage %g: %d plants with empty canopy skipped", stage, len(skipped))
    return records, skipped


def synthetic_records(synth_config, feature_config: FeatureConfig | None = None, L: float = DEFAULT_L,
                      tau: float = DEFAULT_TAU, via_digital_numbers: bool = False):
    """Generate every stage of a synthetic field and extract its feature records.

    With ``via_digital_numbers`` the scenes are converted to DNs and
    calibrated back through panel fits, exercising the calibration path.
    """
    from . import synthgen
    from .calibration import apply_calibration, fit_empirical_line

    records, skipped = [], {}
    model = None
    if via_digital_numbers:
        gains = synthgen.sensor_gains(synth_config)
        model = fit_empirical_line(synthgen.panel_observations(gains))
    for si, stage in enumerate(synth_config.stages):
        scene, truth = synthgen.gen_field(synth_config, si)
        if model is not None:
            scene, _ = apply_calibration(model, synthgen.to_digital_numbers(scene, gains))
        recs, skip = extract_field_features(scene, truth.regions, truth.labels, stage, feature_config, L, tau)
        records += recs
        skipped[stage] = skip
    return records, skipped
