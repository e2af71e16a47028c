"""Command-line entry point.

Subcommands: synth, ingest, fdc, train, experiment, eval, export-features,
plot. Configuration is a single JSON file; command-line flags override file
values. Every stochastic step derives from the mandatory --seed, and an
experiment writes a run manifest from which it can be re-executed
bit-identically.

Exit codes: 0 success, 2 configuration errors, 3 data errors, 4 runtime
failures. Progress goes to stderr; machine-readable results only to files.
"""

from __future__ import annotations

import argparse
import copy
import datetime
import json
import sys
from pathlib import Path

from . import rng as _rng
from ._version import __version__
from .catalog import DateRange, NormEntry, load_catalog, load_daily
from .errors import ConfigError, DataError, InvalidSplit
from .experiments import (
    PUB_KFOLD,
    PUR_REGIONAL,
    TEMPORAL,
    EnsembleSpec,
    FdcStore,
    apply_fdc_scenario,
    assemble_report,
    config_hash,
    export_features,
    load_manifest,
    load_report_rows,
    make_pub_kfold,
    make_pur_splits,
    make_temporal_split,
    run_ensemble,
    write_manifest,
    write_report,
)
from .fdc import export_fdcs
from .network import FIVE_ATTR_DEFAULT, SELECTIONS, EncoderConfig, load_model
from .training import TrainConfig, build_train_data, predict, train

DEFAULTS: dict = {
    "seed": None,
    "workers": 1,
    "data": {
        "attributes": None,
        "gauges": None,
        "regions": None,
        "forcing_dir": None,
        "flow_dir": None,
    },
    "split": {
        "kind": TEMPORAL,
        "train_start": "1985-10-01",
        "train_end": "1995-09-30",
        "test_start": "1995-10-01",
        "test_end": "2005-09-30",
        "k": 12,
        "fold": "all",
        "region": "all",
        "split_seed": None,
    },
    "model": {
        "hidden_size": 64,
        "dropout": 0.4,
        "encoder_layers": [[8, 5, 1, 0], [16, 5, 1, 0]],
        "encoder_pool": 2,
        "encoder_features": 20,
        "five_attributes": list(FIVE_ATTR_DEFAULT),
    },
    "training": {
        "epochs": 30,
        "batch_basins": 16,
        "seq_len": 365,
        "lr": 1e-3,
        "clip_norm": 1.0,
        "steps_per_epoch": None,
    },
    "ensemble": {
        "selections": list(SELECTIONS),
        "seeds": None,
        "n_seeds": 6,
        "use_fdc": True,
        "fraction": 1.0,
        "scenario_seed": None,
    },
    "selection": "full-attr",  # single-model training only
}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return raw


def resolve_config(args) -> dict:
    """defaults <- config file <- flags; derived seeds are materialized."""
    resolved = _deep_merge(DEFAULTS, load_config_file(getattr(args, "config", None)))

    flag_map = {
        "seed": ("seed",),
        "workers": ("workers",),
        "epochs": ("training", "epochs"),
        "batch_basins": ("training", "batch_basins"),
        "seq_len": ("training", "seq_len"),
        "lr": ("training", "lr"),
        "hidden_size": ("model", "hidden_size"),
        "dropout": ("model", "dropout"),
        "k": ("split", "k"),
        "fold": ("split", "fold"),
        "region": ("split", "region"),
        "train_start": ("split", "train_start"),
        "train_end": ("split", "train_end"),
        "test_start": ("split", "test_start"),
        "test_end": ("split", "test_end"),
        "split_kind": ("split", "kind"),
        "fraction": ("ensemble", "fraction"),
        "selection": ("selection",),
        "attributes": ("data", "attributes"),
        "gauges": ("data", "gauges"),
        "regions": ("data", "regions"),
        "forcing_dir": ("data", "forcing_dir"),
        "flow_dir": ("data", "flow_dir"),
    }
    for flag, keys in flag_map.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        node = resolved
        for key in keys[:-1]:
            node = node[key]
        node[keys[-1]] = value
    if getattr(args, "selections", None):
        resolved["ensemble"]["selections"] = [s.strip() for s in args.selections.split(",")]
    if getattr(args, "use_fdc", None) is not None:
        resolved["ensemble"]["use_fdc"] = args.use_fdc
    if getattr(args, "n_seeds", None) is not None:
        resolved["ensemble"]["n_seeds"] = args.n_seeds

    data = resolved["data"]
    for key, value in data.items():
        if isinstance(value, str):
            data[key] = str(Path(value).resolve())

    seed = resolved["seed"]
    if seed is not None:
        ens = resolved["ensemble"]
        if ens["seeds"] is None:
            ens["seeds"] = [_rng.derive_seed(seed, "member", i) for i in range(int(ens["n_seeds"]))]
        if ens["scenario_seed"] is None:
            ens["scenario_seed"] = _rng.derive_seed(seed, "fdc-scenario")
        if resolved["split"]["split_seed"] is None:
            resolved["split"]["split_seed"] = _rng.derive_seed(seed, "split")
    return resolved


def validate_config(
    resolved: dict, need_data: bool = False, need_seed: bool = False, need_training: bool = True
) -> None:
    """Structural validation; raises ConfigError with a specific complaint.

    need_training=False relaxes the checks that couple split ranges to the
    training protocol (range overlap, seq_len fit); commands that only read
    the train window for percentile computation pass False so a moved window
    is not rejected against test dates they never use.
    """
    split = resolved["split"]
    if split["kind"] not in (TEMPORAL, PUB_KFOLD, PUR_REGIONAL):
        raise ConfigError(f"split.kind must be one of temporal|pub_kfold|pur_regional, got {split['kind']!r}")
    try:
        train_range = DateRange.parse(split["train_start"], split["train_end"])
        test_range = DateRange.parse(split["test_start"], split["test_end"])
    except ValueError as e:
        raise ConfigError(f"bad split dates: {e}") from None
    if need_training and split["kind"] == TEMPORAL and train_range.overlaps(test_range):
        raise ConfigError("temporal split train and test ranges overlap")
    if split["kind"] == PUB_KFOLD:
        if not isinstance(split["k"], int) or split["k"] < 2:
            raise ConfigError(f"split.k must be an integer >= 2, got {split['k']!r}")
        if split["fold"] != "all" and not (isinstance(split["fold"], int) and 1 <= split["fold"] <= split["k"]):
            raise ConfigError(f"split.fold must be 'all' or 1..k, got {split['fold']!r}")

    model = resolved["model"]
    if model["hidden_size"] < 1:
        raise ConfigError("model.hidden_size must be >= 1")
    if not 0.0 <= model["dropout"] < 1.0:
        raise ConfigError("model.dropout must be in [0, 1)")
    try:
        EncoderConfig(
            layers=tuple(tuple(l) for l in model["encoder_layers"]),
            pool=model["encoder_pool"],
            out_features=model["encoder_features"],
        ).output_lengths()
    except Exception as e:
        raise ConfigError(f"bad encoder config: {e}") from None

    training = resolved["training"]
    if training["epochs"] < 0 or training["batch_basins"] < 1 or training["seq_len"] < 1:
        raise ConfigError("training counts must be positive (epochs may be 0)")
    if training["lr"] <= 0:
        raise ConfigError("training.lr must be > 0")
    if need_training and training["seq_len"] > train_range.n_days:
        raise ConfigError(
            f"training.seq_len {training['seq_len']} exceeds the {train_range.n_days}-day training range"
        )

    ens = resolved["ensemble"]
    for s in ens["selections"]:
        if s not in SELECTIONS:
            raise ConfigError(f"unknown input selection {s!r}")
    if not 0.0 < ens["fraction"] <= 1.0:
        raise ConfigError(f"ensemble.fraction must be in (0, 1], got {ens['fraction']}")
    if ens["seeds"] is not None and len(set(ens["seeds"])) != len(ens["seeds"]):
        raise ConfigError("ensemble.seeds must be distinct")
    if resolved["selection"] not in SELECTIONS:
        raise ConfigError(f"unknown input selection {resolved['selection']!r}")
    if resolved["workers"] < 1:
        raise ConfigError("workers must be >= 1")

    if need_seed and resolved["seed"] is None:
        raise ConfigError("--seed is required (reproducibility is mandatory)")
    if need_data:
        for key in ("attributes", "gauges", "forcing_dir", "flow_dir"):
            if not resolved["data"][key]:
                raise ConfigError(f"data.{key} is required")


def split_ranges(resolved: dict) -> tuple[DateRange, DateRange]:
    split = resolved["split"]
    return (
        DateRange.parse(split["train_start"], split["train_end"]),
        DateRange.parse(split["test_start"], split["test_end"]),
    )


def load_data(resolved: dict):
    data = resolved["data"]
    catalog = load_catalog(data["attributes"], data["gauges"], data["regions"])
    forcing_dir = Path(data["forcing_dir"])
    flow_dir = Path(data["flow_dir"])
    series = {}
    for basin in catalog:
        series[basin.id] = load_daily(forcing_dir / f"{basin.id}.csv", flow_dir / f"{basin.id}.csv", basin)
    return catalog, series


def build_plans(resolved: dict, catalog) -> list:
    train_range, test_range = split_ranges(resolved)
    split = resolved["split"]
    if split["kind"] == TEMPORAL:
        return [make_temporal_split(catalog, train_range, test_range)]
    if split["kind"] == PUB_KFOLD:
        plans = make_pub_kfold(catalog.ids, split["k"], split["split_seed"], train_range, test_range)
        if split["fold"] != "all":
            plans = [plans[split["fold"] - 1]]
        return plans
    plans = make_pur_splits(catalog, train_range, test_range)
    if split["region"] != "all":
        chosen = [p for p in plans if p.label == split["region"]]
        if not chosen:
            raise ConfigError(f"region {split['region']!r} not present in the region file")
        plans = chosen
    return plans


def base_train_config(resolved: dict) -> TrainConfig:
    model = resolved["model"]
    training = resolved["training"]
    return TrainConfig(
        epochs=training["epochs"],
        batch_basins=training["batch_basins"],
        seq_len=training["seq_len"],
        lr=training["lr"],
        seed=0,
        selection=resolved["selection"],
        use_fdc=resolved["ensemble"]["use_fdc"],
        hidden_size=model["hidden_size"],
        dropout=model["dropout"],
        clip_norm=training["clip_norm"],
        steps_per_epoch=training["steps_per_epoch"],
        encoder=EncoderConfig(
            layers=tuple(tuple(l) for l in model["encoder_layers"]),
            pool=model["encoder_pool"],
            out_features=model["encoder_features"],
        ),
        five_attributes=tuple(model["five_attributes"]),
    )


def run_experiment(resolved: dict, out_dir: Path) -> dict:
    """Execute every plan of the configured split; returns the manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    catalog, series = load_data(resolved)
    plans = build_plans(resolved, catalog)
    ens = resolved["ensemble"]
    spec = EnsembleSpec(
        selections=tuple(ens["selections"]),
        seeds=tuple(ens["seeds"]),
        use_fdc=ens["use_fdc"],
        fraction=ens["fraction"],
    )
    base_cfg = base_train_config(resolved)

    manifest: dict = {
        "tool_version": __version__,
        "resolved_config": resolved,
        "config_hash": config_hash(resolved),
        "splits": [],
        "outputs": {},
        "fdc_assignments": {},
        "checkpoints": {},
    }
    for plan in plans:
        _log(f"[experiment] plan {plan.label}: {len(plan.train_basins)} train / {len(plan.test_basins)} test basins")
        plan_dir = out_dir / plan.label
        plan_dir.mkdir(parents=True, exist_ok=True)
        report, assignment, checkpoints = run_ensemble(
            catalog,
            series,
            plan,
            spec,
            base_cfg,
            run_dir=plan_dir,
            max_workers=resolved["workers"],
            scenario_seed=ens["scenario_seed"],
        )
        csv_path = plan_dir / "report.csv"
        json_path = plan_dir / "aggregates.json"
        write_report(report, csv_path, json_path)
        manifest["splits"].append(plan.to_dict())
        manifest["outputs"][plan.label] = {"report": str(csv_path), "aggregates": str(json_path)}
        manifest["fdc_assignments"][plan.label] = assignment.table if assignment else None
        manifest["checkpoints"][plan.label] = checkpoints
        for member in report.failed_members:
            _log(f"[experiment] WARNING member failed: {member}")
        ens_median = report.aggregates["members"].get("ensemble", {}).get("median_nse")
        if ens_median is not None:
            _log(f"[experiment] plan {plan.label}: ensemble median NSE {ens_median:.4f}")
    write_manifest(out_dir / "manifest.json", manifest)
    return manifest


# --- subcommands ------------------------------------------------------------


def cmd_synth(args) -> int:
    from .synth import make_world

    start = datetime.date.fromisoformat(args.start)
    world = make_world(
        args.basins,
        args.regions,
        args.seed,
        args.out,
        days=args.days,
        start=start,
        phi_classes=args.phi_classes,
    )
    _log(f"[synth] wrote {world['n_basins']} basins / {world['n_regions']} regions to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    resolved = resolve_config(args)
    validate_config(resolved, need_data=True, need_training=False)
    catalog, series = load_data(resolved)
    inventory = {
        "n_basins": len(catalog),
        "attribute_names": list(catalog.attribute_names),
        "basins": {},
    }
    from .catalog import QVAR

    for basin in catalog:
        s = series[basin.id]
        q, qmask = s.column(QVAR)
        inventory["basins"][basin.id] = {
            "start": s.start_date.isoformat(),
            "end": s.end_date.isoformat(),
            "days": s.n_days,
            "q_observed": int(qmask.sum()),
            "q_coverage": float(qmask.mean()),
            "region": basin.region,
        }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(inventory, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"[ingest] {len(catalog)} basins validated; inventory at {out}")
    return 0


def cmd_fdc(args) -> int:
    resolved = resolve_config(args)
    validate_config(
        resolved,
        need_data=True,
        need_seed=args.fraction is not None and args.fraction < 1.0,
        need_training=False,
    )
    catalog, series = load_data(resolved)
    train_range, _ = split_ranges(resolved)
    store = FdcStore(series, train_range)
    fraction = args.fraction if args.fraction is not None else 1.0
    seed = resolved["seed"] if resolved["seed"] is not None else 0
    from .fdc import build_availability, migrate_fdc

    avail = build_availability(catalog.ids, fraction, seed)
    donors = [(catalog[b], store.get(b)) for b in avail.gauged_ids]
    fdcs = []
    for bid in catalog.ids:
        if avail[bid]:
            fdcs.append(store.get(bid))
        else:
            fdcs.append(migrate_fdc(catalog[bid], donors))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_fdcs(fdcs, out)
    n_migrated = sum(1 for f in fdcs if f.source_basin_id != f.basin_id)
    _log(f"[fdc] wrote {len(fdcs)} curves ({n_migrated} migrated) to {out}")
    return 0


def cmd_train(args) -> int:
    resolved = resolve_config(args)
    validate_config(resolved, need_data=not args.validate_only, need_seed=not args.validate_only)
    if args.validate_only:
        _log("[train] config OK")
        return 0
    catalog, series = load_data(resolved)
    plans = build_plans(resolved, catalog)
    if len(plans) != 1:
        raise ConfigError("train needs a single plan; pick --fold or --region")
    plan = plans[0]
    cfg_base = base_train_config(resolved)
    from dataclasses import replace

    cfg = replace(cfg_base, seed=resolved["seed"], selection=resolved["selection"])
    store = FdcStore(series, plan.train_range)
    train_fdcs = {bid: store.get(bid) for bid in plan.train_basins} if cfg.use_fdc else None
    data = build_train_data(catalog, series, list(plan.train_basins), plan.train_range, cfg, train_fdcs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _log(f"[train] {cfg.selection} seed {cfg.seed}: {cfg.epochs} epochs on {len(plan.train_basins)} basins")
    model, trace = train(data, cfg, trace_path=out_dir / "trace.csv", checkpoint_path=out_dir / "model.ckpt")
    write_manifest(
        out_dir / "manifest.json",
        {
            "resolved_config": resolved,
            "config_hash": config_hash(resolved),
            "split": plan.to_dict(),
            "checkpoint": str(out_dir / "model.ckpt"),
            "trace": str(out_dir / "trace.csv"),
            "final_loss": trace[-1][2] if trace else None,
        },
    )
    _log(f"[train] checkpoint at {out_dir / 'model.ckpt'}")
    return 0


def cmd_experiment(args) -> int:
    if args.from_manifest:
        manifest = load_manifest(args.from_manifest)
        resolved = manifest["resolved_config"]
    else:
        resolved = resolve_config(args)
    validate_config(resolved, need_data=not args.validate_only, need_seed=not args.validate_only)
    if args.validate_only:
        _log("[experiment] config OK")
        return 0
    run_experiment(resolved, Path(args.out))
    _log(f"[experiment] manifest at {Path(args.out) / 'manifest.json'}")
    return 0


def cmd_eval(args) -> int:
    resolved = resolve_config(args)
    validate_config(resolved, need_data=True)
    model, stats, manifest = load_model(args.checkpoint)
    catalog, series = load_data(resolved)
    plans = build_plans(resolved, catalog)
    if len(plans) != 1:
        raise ConfigError("eval needs a single plan; pick --fold or --region")
    plan = plans[0]

    fdc_norms = {}
    if model.config.use_fdc:
        if "fdc_norm" not in manifest:
            raise DataError(f"checkpoint {args.checkpoint} lacks FDC normalization stats")
        entry = NormEntry(*manifest["fdc_norm"])
        store = FdcStore(series, plan.train_range)
        assignment = apply_fdc_scenario(
            catalog, plan, resolved["ensemble"]["fraction"],
            resolved["ensemble"]["scenario_seed"] or 0, store,
        )
        from .fdc import normalize_fdc

        fdc_norms = {bid: normalize_fdc(f, entry) for bid, f in assignment.fdcs.items()}

    from .experiments import _test_obs

    preds, obs, obs_mask = {}, {}, {}
    for bid in plan.test_basins:
        preds[bid] = predict(
            model, stats, catalog, series[bid], plan.test_range, fdc_norms.get(bid)
        )
        obs[bid], obs_mask[bid] = _test_obs(series[bid], plan.test_range)
    report = assemble_report(
        plan.label, {"model": preds}, {"model": model.config.selection}, ["model"], obs, obs_mask
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.csv", out / "aggregates.json")
    median = report.aggregates["members"]["model"]["median_nse"]
    _log(f"[eval] median NSE {median if median is None else f'{median:.4f}'} -> {out / 'report.csv'}")
    return 0


def cmd_export_features(args) -> int:
    resolved = resolve_config(args)
    validate_config(resolved, need_data=True, need_training=False)
    model, stats, manifest = load_model(args.checkpoint)
    if not model.config.use_fdc:
        raise ConfigError("export-features needs a model trained with use_fdc")
    if "fdc_norm" not in manifest:
        raise DataError(f"checkpoint {args.checkpoint} lacks FDC normalization stats")
    entry = NormEntry(*manifest["fdc_norm"])
    catalog, series = load_data(resolved)
    train_range, _ = split_ranges(resolved)
    store = FdcStore(series, train_range)
    basin_fdcs = {bid: store.get(bid) for bid in catalog.ids}

    from . import metrics as M
    from .catalog import QVAR

    signatures = {}
    for bid in catalog.ids:
        q, qmask = series[bid].column(QVAR, train_range)
        a = M.acf1(q, qmask)
        b = M.baseflow_index(q, qmask)
        signatures[bid] = {
            "acf1_obs": a.value if a.defined else None,
            "bfi_obs": b.value if b.defined else None,
        }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_features(model, entry, catalog, basin_fdcs, signatures, out)
    _log(f"[export-features] {len(basin_fdcs)} basins -> {out}")
    return 0


def cmd_plot(args) -> int:
    from .plots import metric_values, plot_metric_boxes

    scenarios = []
    for item in args.report:
        if "=" not in item:
            raise ConfigError(f"--report expects label=path, got {item!r}")
        label, path = item.split("=", 1)
        rows = load_report_rows(path)
        present = []
        for r in rows:
            if r["member"] not in present:
                present.append(r["member"])
        if args.members:
            members = [m.strip() for m in args.members.split(",")]
        else:
            members = [m for m in present if m.endswith(":mean") or m == "ensemble"] or present
        groups = {}
        for m in members:
            vals = metric_values(rows, m, args.metric)
            if vals:
                groups[m] = vals
        scenarios.append((label, groups))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_metric_boxes(scenarios, out, metric_label=args.metric.upper(), title=args.title)
    _log(f"[plot] wrote {out}")
    return 0


# --- parser -----------------------------------------------------------------


def _add_config_flags(p: argparse.ArgumentParser, with_overrides: bool = True) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--attributes", help="attribute CSV path")
    p.add_argument("--gauges", help="gauge CSV path")
    p.add_argument("--regions", help="region CSV path")
    p.add_argument("--forcing-dir", dest="forcing_dir", help="per-basin forcing CSV directory")
    p.add_argument("--flow-dir", dest="flow_dir", help="per-basin flow CSV directory")
    if with_overrides:
        p.add_argument("--split", dest="split_kind", choices=[TEMPORAL, PUB_KFOLD, PUR_REGIONAL])
        p.add_argument("--train-start", dest="train_start")
        p.add_argument("--train-end", dest="train_end")
        p.add_argument("--test-start", dest="test_start")
        p.add_argument("--test-end", dest="test_end")
        p.add_argument("--k", type=int, help="number of folds for pub_kfold")
        p.add_argument("--fold", type=int, help="run a single 1-based fold")
        p.add_argument("--region", help="run a single held-out region")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-basins", dest="batch_basins", type=int)
        p.add_argument("--seq-len", dest="seq_len", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--hidden-size", dest="hidden_size", type=int)
        p.add_argument("--dropout", type=float)
        p.add_argument("--selections", help="comma-separated input selections")
        p.add_argument("--n-seeds", dest="n_seeds", type=int)
        p.add_argument("--fraction", type=float, help="FDC availability fraction in (0, 1]")
        fdc_group = p.add_mutually_exclusive_group()
        fdc_group.add_argument("--use-fdc", dest="use_fdc", action="store_true", default=None)
        fdc_group.add_argument("--no-fdc", dest="use_fdc", action="store_false", default=None)
        p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdclstm",
        description="FDC-informed LSTM streamflow modeling: data ingestion, flow "
        "duration curves, training, holdout experiments, and reports.",
    )
    parser.add_argument("--version", action="version", version=f"fdclstm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic linear-reservoir world")
    p.add_argument("--out", required=True)
    p.add_argument("--basins", type=int, required=True)
    p.add_argument("--regions", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--days", type=int, default=1095)
    p.add_argument("--start", default="2000-01-01")
    p.add_argument("--phi-classes", dest="phi_classes", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate data files and write an inventory")
    _add_config_flags(p, with_overrides=False)
    p.add_argument("--out", required=True, help="inventory JSON path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fdc", help="compute (and optionally migrate) flow duration curves")
    _add_config_flags(p, with_overrides=False)
    p.add_argument("--train-start", dest="train_start")
    p.add_argument("--train-end", dest="train_end")
    p.add_argument("--fraction", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="FDC export CSV path")
    p.set_defaults(func=cmd_fdc)

    p = sub.add_parser("train", help="train a single model on the training split")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=None, help="master seed (required)")
    p.add_argument("--selection", choices=list(SELECTIONS))
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--validate-only", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="run a full split + ensemble protocol")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=None, help="master seed (required)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--from-manifest", dest="from_manifest", help="re-execute a recorded run")
    p.add_argument("--validate-only", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-features", help="export encoder features per basin")
    _add_config_flags(p, with_overrides=False)
    p.add_argument("--train-start", dest="train_start")
    p.add_argument("--train-end", dest="train_end")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="feature CSV path")
    p.set_defaults(func=cmd_export_features)

    p = sub.add_parser("plot", help="render box plots from evaluation reports")
    p.add_argument("--report", action="append", required=True, help="label=report.csv (repeatable)")
    p.add_argument("--metric", default="nse", choices=["nse", "kge"])
    p.add_argument("--members", help="comma-separated member names to plot")
    p.add_argument("--title", default=None)
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        _log(f"error (config): {e}")
        return 2
    except DataError as e:
        _log(f"error (data): {e}")
        return 3
    except Exception as e:  # runtime failures keep a stable code too
        _log(f"error (runtime): {type(e).__name__}: {e}")
        return 4


if __name__ == "__main__":
    sys.exit(main())
