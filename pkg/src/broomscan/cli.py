"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 internal invariant violation (including a failed gradient check).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, kernels, lstm, scenarios, synthgen
from .balance import balance_by_mean_match, balance_by_smote, to_records, to_sequences
from .calibration import apply_calibration, fit_empirical_line, read_panels, write_panels
from .canopy import DEFAULT_L, DEFAULT_TAU, apply_mask, canopy_mask, load_mask, save_mask
from .errors import BroomscanError, DataError, InvariantError
from .evaluate import confusion, per_class_report, read_report_csv, render_table, write_report_csv, write_report_json
from .features import (
    DEFAULT_BINS, FeatureConfig, FeatureRecord, extract_plant_features, kde_curve, read_feature_csv,
    write_feature_csv, write_kde_csv,
)
from .phenology import DEFAULT_TARGETS, accumulate, read_weather, stage_dates, write_weather
from .pipeline import extract_field_features
from .raster import BandId, crop, load_raster, read_regions, save_raster, write_regions

log = logging.getLogger("broomscan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(seed, config) -> list[str]:
    return [f"broomscan {__version__}", f"seed={seed}", f"config_sha256={config_hash(config)}"]


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read JSON config {path}: {exc}") from exc


# -- synth -------------------------------------------------------------------

def cmd_synth(args) -> int:
    overrides = _load_json(args.config) if args.config else {}
    overrides["seed"] = args.seed
    base = synthgen.SynthConfig.from_dict(overrides)
    cfg = base.scaled_effects(synthgen.EFFECT_PRESETS[args.preset])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gains = synthgen.sensor_gains(cfg)
    weather = synthgen.gen_weather(cfg)
    write_weather(weather, out / "weather.csv")
    dates = stage_dates(accumulate(weather), cfg.stages)
    stages = []
    truth = None
    for si, stage in enumerate(cfg.stages):
        scene, truth = synthgen.gen_field(cfg, si)
        units = "reflectance"
        if not args.reflectance:
            scene = synthgen.to_digital_numbers(scene, gains)
            units = "digital-number"
        name = f"scene_{stage:g}.json"
        save_raster(scene, out / name)
        stages.append({"gdd": stage, "scene": name, "units": units,
                       "date": str(dates[stage]) if dates[stage] else None, "clamped": truth.clamped})
    write_regions(truth.regions, out / "regions.csv")
    with open(out / "truth.csv", "w", encoding="utf-8") as fh:
        fh.write("plant_id,label\n")
        for pid, label in truth.labels.items():
            fh.write(f"{pid},{label}\n")
    write_panels(synthgen.panel_observations(gains), out / "panels.csv")
    manifest = {
        "provenance": provenance(args.seed, cfg.to_dict()),
        "stages": stages,
        "regions": "regions.csv",
        "truth": "truth.csv",
        "panels": "panels.csv",
        "weather": "weather.csv",
        "synth_config": cfg.to_dict(),
        "preset": args.preset,
    }
    _write_json(manifest, out / "manifest.json")
    return 0


# -- gdd ---------------------------------------------------------------------

def cmd_gdd(args) -> int:
    series = accumulate(read_weather(args.weather), args.tbase)
    hits = stage_dates(series, args.targets)
    result = {
        "tbase": args.tbase,
        "season_start": str(series.start_date),
        "season_days": len(series.dates),
        "final_gdd": round(float(series.cumulative[-1]), 6),
        "stages": [
            {"target": t, "date": str(d) if d else None, "reached": d is not None} for t, d in hits.items()
        ],
    }
    _write_json(result, args.out)
    if args.series_out:
        with open(args.series_out, "w", encoding="utf-8") as fh:
            fh.write("date,cumulative_gdd\n")
            for d, v in zip(series.dates, series.cumulative):
                fh.write(f"{d},{float(v)!r}\n")
    return 0


# -- calibrate / crop / mask -------------------------------------------------

def cmd_calibrate(args) -> int:
    model = fit_empirical_line(read_panels(args.panels))
    raster, counts = apply_calibration(model, load_raster(args.input))
    save_raster(raster, args.out)
    _write_json({
        "gains": {b.value: g for b, g in model.gains.items()},
        "offsets": {b.value: o for b, o in model.offsets.items()},
        "clamped_pixels": {b.value: c for b, c in counts.items()},
    }, None)
    return 0


def cmd_crop(args) -> int:
    scene = load_raster(args.input)
    out = Path(args.out_dir)
    for region in read_regions(args.regions):
        save_raster(crop(scene, region), out / f"plot_{region.plant_id}.json")
    return 0


def cmd_mask(args) -> int:
    mask = canopy_mask(load_raster(args.input), args.L, args.tau)
    save_mask(mask, args.out)
    _write_json({"width": mask.width, "height": mask.height, "canopy_pixels": mask.popcount()}, None)
    return 0


# -- features ----------------------------------------------------------------

def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(n_bins=args.bins)


def _read_truth(path) -> dict:
    labels = {}
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if line.strip() and not line.startswith("#"):
                pid, label = line.strip().split(",")[:2]
                labels[pid] = label
    return labels


def cmd_features(args) -> int:
    fcfg = _feature_config(args)
    cfg_echo = {"bins": args.bins, "L": args.L, "tau": args.tau}
    if args.manifest:
        root = Path(args.manifest).parent
        manifest = _load_json(args.manifest)
        regions = read_regions(root / manifest["regions"])
        labels = _read_truth(root / manifest["truth"])
        panels = args.panels or (root / manifest["panels"] if manifest.get("panels") else None)
        model = fit_empirical_line(read_panels(panels)) if panels else None
        records, curves = [], {}
        for entry in manifest["stages"]:
            scene = load_raster(root / entry["scene"])
            if any(u == "digital-number" for u in scene.units.values()):
                if model is None:
                    raise DataError(f"{entry['scene']} holds digital numbers; a panel file is required")
                scene, _ = apply_calibration(model, scene)
            recs, _ = extract_field_features(scene, regions, labels, float(entry["gdd"]), fcfg, args.L, args.tau)
            records += recs
            if args.kde_out and float(entry["gdd"]) == args.kde_stage:
                curves.update(_kde_curves(scene, regions, labels, args))
        write_feature_csv(records, args.out, provenance(0, cfg_echo))
        if args.kde_out:
            write_kde_csv(curves, args.kde_out)
        return 0
    if not args.input:
        raise UsageError("features needs --manifest or --in")
    plot = load_raster(args.input)
    mask = load_mask(args.mask) if args.mask else canopy_mask(plot, args.L, args.tau)
    vec = extract_plant_features(apply_mask(plot, mask), fcfg)
    rec = FeatureRecord(args.plant_id, args.stage, args.label, vec)
    write_feature_csv([rec], args.out, provenance(0, cfg_echo))
    return 0


def _kde_curves(scene, regions, labels, args) -> dict:
    """Pooled canopy pixels per band and class, as KDE curves."""
    pools = {}
    for region in regions:
        if region.plant_id not in labels:
            continue
        plot = crop(scene, region)
        masked = apply_mask(plot, canopy_mask(plot, args.L, args.tau))
        for band, vals in masked.items():
            pools.setdefault((band, labels[region.plant_id]), []).append(vals)
    curves = {}
    for (band, label), parts in sorted(pools.items(), key=lambda kv: (list(BandId).index(kv[0][0]), kv[0][1])):
        vals = np.concatenate(parts)
        if vals.size:
            curves[f"{band.value}/{label}"] = kde_curve(vals, None, 128)
    return curves


# -- balance -----------------------------------------------------------------

def _stages_of(records, requested) -> tuple:
    if requested:
        return tuple(requested)
    return tuple(sorted({r.gdd_stage for r in records if not r.synthetic}))


def cmd_balance(args) -> int:
    records = [r for r in read_feature_csv(args.input) if not r.synthetic]
    stages = _stages_of(records, args.stages)
    samples = to_sequences(records, stages)
    if args.method == "meanmatch":
        balanced = balance_by_mean_match(samples)
    else:
        balanced = balance_by_smote(samples, args.k, args.seed, args.target, per_stage=args.per_stage)
    cfg = {"method": args.method, "stages": stages, "k": args.k, "target": args.target, "per_stage": args.per_stage}
    write_feature_csv(to_records(balanced), args.out, provenance(args.seed, cfg))
    counts = {}
    for s in balanced:
        key = f"{s.label}{'_synthetic' if s.synthetic else ''}"
        counts[key] = counts.get(key, 0) + 1
    _write_json({"stages": stages, "counts": counts}, None)
    return 0


# -- train / gradcheck -------------------------------------------------------

def _model_config(args, overrides=None) -> lstm.ModelConfig:
    d = dict(overrides or {})
    if getattr(args, "hidden", None):
        d["hidden"] = args.hidden
    if getattr(args, "dense", None):
        d["dense"] = args.dense
    return lstm.ModelConfig(**d)


def _train_config(args, overrides=None) -> lstm.TrainConfig:
    d = dict(overrides or {})
    if getattr(args, "epochs", None) is not None:
        d["epochs"] = args.epochs
    d["seed"] = args.seed
    return lstm.TrainConfig(**d)


def cmd_train(args) -> int:
    records = [r for r in read_feature_csv(args.data)]
    stages = _stages_of(records, args.stages)
    samples = to_sequences(records, stages)
    mcfg = _model_config(args)
    tcfg = _train_config(args)
    assignment = scenarios.split(samples, tcfg.split, args.seed)
    parts = scenarios.partition(samples, assignment)
    train_set, val_set, test_set = parts["train"], parts["val"], parts["test"]
    st = None
    if not args.no_standardize:
        train_set, (val_set, test_set), st = scenarios.standardize(train_set, val_set, test_set)
    params, history = lstm.train(train_set, mcfg, tcfg, val_set)
    extra = {"stages": list(stages)}
    if st is not None:
        extra["standardizer"] = {"mean": st.mean.tolist(), "std": st.std.tolist()}
    lstm.save_checkpoint(params, args.out, seed=args.seed, epoch=tcfg.epochs, extra=extra)
    if args.history_out:
        with open(args.history_out, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
            for row in history.rows():
                fh.write(",".join([str(row[0])] + [repr(float(v)) for v in row[1:]]) + "\n")
    preds, _ = lstm.predict(params, test_set)
    report = per_class_report(confusion(preds, np.array([s.y for s in test_set])), "train", stages, "None")
    _write_json({"param_count": len(params), "test": report.to_json(), "final_val_loss": history.val_loss[-1]}, None)
    return 0


def cmd_gradcheck(args) -> int:
    dims = args.dims
    if len(dims) < 2:
        raise UsageError("--dims needs the input size followed by at least one hidden size")
    res = lstm.gradient_check(dims[0], dims[1:], args.seq, batch=args.batch, eps=args.eps, seed=args.seed,
                              dropout=args.dropout, l2=args.l2)
    ok = res["max_rel_error"] <= args.tol
    _write_json({"max_rel_error": res["max_rel_error"], "n_params": res["n_params"], "tolerance": args.tol,
                 "passed": ok, "backend": kernels.BACKEND}, None)
    if not ok:
        raise InvariantError(f"gradient check failed: max relative error {res['max_rel_error']:.3e} > {args.tol}")
    return 0


# -- scenario / report -------------------------------------------------------

def param_note(mcfg: lstm.ModelConfig) -> list[str]:
    n = lstm.param_count(mcfg)
    lines = [f"param_count={n} (input {mcfg.input_dim}, lstm {list(mcfg.hidden)}, dense {list(mcfg.dense)})"]
    if n != lstm.REFERENCE_PARAM_COUNT:
        lines.append(
            f"reference_param_count={lstm.REFERENCE_PARAM_COUNT} unreconstructable from the stated layout "
            f"(two LSTM layers + sigmoid head); an unstated dense layer would be needed, e.g. "
            + "; ".join(f"lstm {list(c.hidden)} dense {list(c.dense)}" for c in lstm.layouts_matching(lstm.REFERENCE_PARAM_COUNT))
        )
    return lines


def scenario_configs(args, file_cfg) -> list[scenarios.ScenarioConfig]:
    stages = tuple(args.stages) if args.stages else tuple(file_cfg.get("stages", DEFAULT_TARGETS))
    defs = file_cfg.get("scenarios") if args.all else None
    if args.all and not defs:
        defs = [{"id": s} for s in scenarios.SCENARIOS]
    if not args.all:
        if not args.scenario:
            raise UsageError("scenario needs --scenario or --all")
        defs = [{"id": args.scenario}]
    out = []
    for d in defs:
        out.append(scenarios.ScenarioConfig(
            d["id"],
            tuple(d.get("stages", stages)),
            args.scope or d.get("scope", file_cfg.get("scope", "train_only")),
            args.seed,
            args.k,
            not args.no_standardize,
            args.per_stage,
        ))
    return out


def cmd_scenario(args) -> int:
    file_cfg = _load_json(args.config) if args.config else {}
    mcfg = _model_config(args, file_cfg.get("model"))
    tcfg = _train_config(args, file_cfg.get("train"))
    configs = scenario_configs(args, file_cfg)
    records = read_feature_csv(args.data)
    runs = []
    for sc in configs:
        runs += scenarios.run_scenario(records, sc, mcfg, tcfg)
    reports = [r.report for r in runs]
    echo = {"scenarios": [asdict(c) for c in configs], "model": asdict(mcfg), "train": asdict(tcfg)}
    header = provenance(args.seed, echo) + param_note(mcfg)
    write_report_csv(reports, args.out, header)
    if args.json_out:
        write_report_json(reports, args.json_out, {"provenance": header})
    if args.plots_dir:
        scenarios.write_plot_data(runs, args.plots_dir)
    return 0


def cmd_report(args) -> int:
    header, rows = read_report_csv(args.input)
    text = "".join(f"# {h}\n" for h in header) + render_table(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="broomscan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"broomscan {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic field (scenes, regions, weather, truth)")
    s.add_argument("--config", help="JSON with SynthConfig overrides")
    s.add_argument("--preset", choices=sorted(synthgen.EFFECT_PRESETS), default="moderate")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reflectance", action="store_true", help="write reflectance scenes instead of DNs")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("gdd", help="growing degree days and stage dates")
    s.add_argument("--weather", required=True)
    s.add_argument("--tbase", type=float, default=10.0)
    s.add_argument("--targets", type=_floats, default=DEFAULT_TARGETS)
    s.add_argument("--out")
    s.add_argument("--series-out")
    s.set_defaults(func=cmd_gdd)

    s = sub.add_parser("calibrate", help="digital numbers to reflectance via panels")
    s.add_argument("--panels", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("crop", help="cut plot rasters out of a scene")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--regions", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_crop)

    s = sub.add_parser("mask", help="SAVI canopy mask of a plot")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--tau", type=float, default=DEFAULT_TAU)
    s.add_argument("--L", type=float, default=DEFAULT_L)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("features", help="49-value histogram features")
    s.add_argument("--manifest", help="synth-style manifest covering all stages")
    s.add_argument("--panels", help="panel CSV for DN scenes (defaults to the manifest's)")
    s.add_argument("--in", dest="input", help="single plot raster")
    s.add_argument("--mask", help="mask file for --in (computed from SAVI if omitted)")
    s.add_argument("--plant-id", default="plot")
    s.add_argument("--stage", type=float, default=0.0)
    s.add_argument("--label", choices=("healthy", "infected"), default="healthy")
    s.add_argument("--bins", type=int, default=DEFAULT_BINS)
    s.add_argument("--tau", type=float, default=DEFAULT_TAU)
    s.add_argument("--L", type=float, default=DEFAULT_L)
    s.add_argument("--kde-out", help="write per-band class KDE curves (manifest mode)")
    s.add_argument("--kde-stage", type=float, default=897.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("balance", help="mean-matching or SMOTE balancing")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--method", choices=("meanmatch", "smote"), required=True)
    s.add_argument("--stages", type=_floats)
    s.add_argument("--target", type=int)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--per-stage", action="store_true", help="SMOTE each stage independently")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_balance)

    s = sub.add_parser("train", help="train the LSTM on one stage combination")
    s.add_argument("--data", required=True)
    s.add_argument("--stages", type=_floats)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--hidden", type=_ints)
    s.add_argument("--dense", type=_ints)
    s.add_argument("--no-standardize", action="store_true")
    s.add_argument("--history-out")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("scenario", help="run evaluation scenarios into a report grid")
    s.add_argument("--data", required=True)
    s.add_argument("--scenario", choices=scenarios.SCENARIOS)
    s.add_argument("--all", action="store_true")
    s.add_argument("--config", help="JSON with scenarios/model/train/stages/scope keys")
    s.add_argument("--scope", choices=scenarios.SCOPES)
    s.add_argument("--stages", type=_floats)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--hidden", type=_ints)
    s.add_argument("--dense", type=_ints)
    s.add_argument("--per-stage", action="store_true")
    s.add_argument("--no-standardize", action="store_true")
    s.add_argument("--json-out")
    s.add_argument("--plots-dir")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("gradcheck", help="finite-difference check of LSTM gradients")
    s.add_argument("--dims", type=_ints, default=(5, 8), help="input size then hidden sizes")
    s.add_argument("--seq", type=int, default=3)
    s.add_argument("--batch", type=int, default=4)
    s.add_argument("--eps", type=float, default=1e-5)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--dropout", type=float, default=0.2)
    s.add_argument("--l2", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("report", help="render a report CSV as an aligned table")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        sys.stderr.write(f"broomscan: usage error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="broomscan: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"broomscan: usage error: {exc}\n")
        return 1
    except InvariantError as exc:
        sys.stderr.write(f"broomscan: invariant violation: {exc}\n")
        return 3
    except (DataError, OSError) as exc:
        sys.stderr.write(f"broomscan: data error: {exc}\n")
        return 2
    except BroomscanError as exc:
        sys.stderr.write(f"broomscan: error: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"broomscan: internal error: {type(exc).__name__}: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
