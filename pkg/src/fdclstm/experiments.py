"""Holdout protocols, FDC availability scenarios, and the input-selection ensemble.

Three split kinds: a temporal split (same basins, later decade held out), a
randomized k-fold over basins (ungauged-basin setting), and whole-region
holdout (ungauged-region setting, the hard extrapolation case). An ensemble
is the cross product of input selections and seeds; its prediction is the
arithmetic mean hydrograph, and metrics are computed both per member and on
the mean, per selection and overall.

Test-basin FDCs enter only through apply_fdc_scenario, never through the
training path, which keeps the holdout boundary auditable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics as M
from . import rng as _rng
from ._version import __version__ as _version
from .catalog import QVAR, Catalog, DailySeries, DateRange
from .errors import (
    InvalidSplit,
    TooFewBasins,
    TooFewRegions,
    UnlabeledBasin,
)
from .fdc import Fdc, build_availability, compute_fdc, haversine_km, migrate_fdc, normalize_fdc
from .network import SELECTIONS, StreamflowModel, encode_features
from .training import TrainConfig, build_train_data, predict, train, train_config_dict

TEMPORAL = "temporal"
PUB_KFOLD = "pub_kfold"
PUR_REGIONAL = "pur_regional"

DEFAULT_TRAIN_RANGE = DateRange.parse("1985-10-01", "1995-09-30")
DEFAULT_TEST_RANGE = DateRange.parse("1995-10-01", "2005-09-30")


@dataclass(frozen=True)
class SplitPlan:
    kind: str
    train_basins: tuple[str, ...]
    test_basins: tuple[str, ...]
    train_range: DateRange
    test_range: DateRange
    label: str = ""

    def __post_init__(self):
        if self.kind == TEMPORAL:
            if set(self.train_basins) != set(self.test_basins):
                raise InvalidSplit("temporal split must keep the basin set fixed")
            if self.train_range.overlaps(self.test_range):
                raise InvalidSplit(
                    f"temporal ranges overlap: {self.train_range} vs {self.test_range}"
                )
        elif self.kind in (PUB_KFOLD, PUR_REGIONAL):
            if set(self.train_basins) & set(self.test_basins):
                raise InvalidSplit(f"{self.kind} split has basins on both sides")
        else:
            raise InvalidSplit(f"unknown split kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "label": self.label,
            "train_basins": list(self.train_basins),
            "test_basins": list(self.test_basins),
            "train_range": [self.train_range.start.isoformat(), self.train_range.end.isoformat()],
            "test_range": [self.test_range.start.isoformat(), self.test_range.end.isoformat()],
        }


def make_temporal_split(
    catalog: Catalog,
    train_range: DateRange = DEFAULT_TRAIN_RANGE,
    test_range: DateRange = DEFAULT_TEST_RANGE,
) -> SplitPlan:
    """All basins in both sets; disjoint decade-style date ranges."""
    ids = tuple(catalog.ids)
    if not ids:
        warnings.warn("temporal split over an empty catalog", stacklevel=2)
    return SplitPlan(
        kind=TEMPORAL,
        train_basins=ids,
        test_basins=ids,
        train_range=train_range,
        test_range=test_range,
        label="temporal",
    )


def make_pub_kfold(
    basin_ids: list[str],
    k: int,
    seed: int,
    train_range: DateRange = DEFAULT_TRAIN_RANGE,
    test_range: DateRange = DEFAULT_TEST_RANGE,
) -> list[SplitPlan]:
    """Deterministic k-fold partition over basins; fold sizes differ by at most 1."""
    if k < 2:
        raise InvalidSplit(f"k-fold needs k >= 2, got {k}")
    if len(basin_ids) < k:
        raise TooFewBasins(f"{len(basin_ids)} basins cannot fill {k} folds")
    ids = sorted(basin_ids)
    order = _rng.generator(seed, "pub-kfold", k).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    folds = np.array_split(np.arange(len(ids)), k)
    plans = []
    for f, idx in enumerate(folds):
        test = tuple(shuffled[i] for i in idx)
        test_set = set(test)
        train = tuple(b for b in shuffled if b not in test_set)
        plans.append(
            SplitPlan(
                kind=PUB_KFOLD,
                train_basins=train,
                test_basins=test,
                train_range=train_range,
                test_range=test_range,
                label=f"fold{f + 1:02d}",
            )
        )
    return plans


def make_pur_splits(
    catalog: Catalog,
    train_range: DateRange = DEFAULT_TRAIN_RANGE,
    test_range: DateRange = DEFAULT_TEST_RANGE,
) -> list[SplitPlan]:
    """One plan per region: that region held out, all others train."""
    for b in catalog:
        if not b.region:
            raise UnlabeledBasin(b.id)
    regions = sorted({b.region for b in catalog})
    if len(regions) < 2:
        raise TooFewRegions(f"regional holdout needs >= 2 regions, got {len(regions)}")
    plans = []
    for region in regions:
        test = tuple(b.id for b in catalog if b.region == region)
        train = tuple(b.id for b in catalog if b.region != region)
        plans.append(
            SplitPlan(
                kind=PUR_REGIONAL,
                train_basins=train,
                test_basins=test,
                train_range=train_range,
                test_range=test_range,
                label=region,
            )
        )
    return plans


class FdcStore:
    """Lazily computes own-basin FDCs from the training period, with caching.

    Test-basin curves are only ever requested by apply_fdc_scenario; the
    training path asks for training basins alone.
    """

    def __init__(self, series: dict[str, DailySeries], period: DateRange):
        self._series = series
        self._period = period
        self._cache: dict[str, Fdc] = {}

    @property
    def period(self) -> DateRange:
        return self._period

    def get(self, basin_id: str) -> Fdc:
        if basin_id not in self._cache:
            self._cache[basin_id] = compute_fdc(self._series[basin_id], self._period)
        return self._cache[basin_id]


@dataclass
class FdcAssignment:
    fraction: float
    seed: int
    fdcs: dict[str, Fdc]  # test basin -> assigned curve
    table: list[dict]  # one row per test basin, for the run manifest


def apply_fdc_scenario(
    catalog: Catalog,
    plan: SplitPlan,
    fraction: float,
    seed: int,
    store: FdcStore,
) -> FdcAssignment:
    """Assign an FDC to every test basin under an availability scenario.

    Basins that also train (temporal split) keep their own curves outright.
    Of the rest, round(fraction * N) are marked gauged and use their own
    curves; the others borrow from the nearest gauged test basin.
    """
    train_set = set(plan.train_basins)
    avail = build_availability(list(plan.test_basins), fraction, seed)
    donors = [(catalog[b], store.get(b)) for b in avail.gauged_ids]
    fdcs: dict[str, Fdc] = {}
    table = []
    for bid in plan.test_basins:
        if bid in train_set or avail[bid]:
            fdcs[bid] = store.get(bid)
            table.append({"basin_id": bid, "source_basin_id": bid, "migrated": False, "distance_km": 0.0})
        else:
            assigned = migrate_fdc(catalog[bid], donors)
            fdcs[bid] = assigned
            src = catalog[assigned.source_basin_id]
            table.append(
                {
                    "basin_id": bid,
                    "source_basin_id": assigned.source_basin_id,
                    "migrated": True,
                    "distance_km": haversine_km(catalog[bid].lat, catalog[bid].lon, src.lat, src.lon),
                }
            )
    return FdcAssignment(fraction=fraction, seed=seed, fdcs=fdcs, table=table)


@dataclass(frozen=True)
class EnsembleSpec:
    selections: tuple[str, ...]
    seeds: tuple[int, ...]
    use_fdc: bool = True
    fraction: float = 1.0

    def __post_init__(self):
        for s in self.selections:
            if s not in SELECTIONS:
                raise InvalidSplit(f"unknown input selection {s!r}")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidSplit("ensemble seeds must be distinct")
        if not self.selections or not self.seeds:
            raise InvalidSplit("ensemble needs at least one selection and one seed")

    @property
    def n_members(self) -> int:
        return len(self.selections) * len(self.seeds)

    def members(self) -> list[tuple[str, str, int]]:
        """(member name, selection, seed) in canonical order."""
        return [(f"{sel}:s{seed}", sel, seed) for sel in self.selections for seed in self.seeds]


@dataclass(frozen=True)
class EvalRow:
    basin_id: str
    member: str
    nse: M.MetricValue
    kge: M.MetricValue
    n_obs: int


@dataclass
class EvalReport:
    label: str
    rows: list[EvalRow]
    member_order: list[str]  # real members, then per-selection means, then "ensemble"
    signatures: dict[str, dict]  # basin -> acf1_obs / bfi_obs / coverage
    aggregates: dict
    failed_members: list[str] = field(default_factory=list)


def _mean_hydrographs(preds: list[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    out = {}
    for bid in preds[0]:
        out[bid] = np.mean(np.stack([p[bid] for p in preds], axis=0), axis=0)
    return out


def assemble_report(
    label: str,
    member_preds: dict[str, dict[str, np.ndarray]],  # member -> basin -> hydrograph
    member_selection: dict[str, str],
    member_order: list[str],
    obs: dict[str, np.ndarray],
    obs_mask: dict[str, np.ndarray],
    failed_members: list[str] | None = None,
) -> EvalReport:
    """Score members, per-selection mean hydrographs, and the ensemble mean.

    Pure reduction over already-computed hydrographs, so ensemble algebra is
    testable without training anything.
    """
    failed_members = list(failed_members or [])
    surviving = [m for m in member_order if m in member_preds]
    scored: list[tuple[str, dict[str, np.ndarray]]] = [(m, member_preds[m]) for m in surviving]

    selections_in_order = []
    for m in surviving:
        sel = member_selection[m]
        if sel not in selections_in_order:
            selections_in_order.append(sel)
    for sel in selections_in_order:
        group = [member_preds[m] for m in surviving if member_selection[m] == sel]
        scored.append((f"{sel}:mean", _mean_hydrographs(group)))
    if surviving:
        scored.append(("ensemble", _mean_hydrographs([member_preds[m] for m in surviving])))

    rows: list[EvalRow] = []
    basins = sorted(obs)
    for member, preds in scored:
        for bid in basins:
            mask = obs_mask[bid]
            rows.append(
                EvalRow(
                    basin_id=bid,
                    member=member,
                    nse=M.nse(obs[bid], preds[bid], mask),
                    kge=M.kge(obs[bid], preds[bid], mask),
                    n_obs=int(mask.sum()),
                )
            )

    signatures = {}
    for bid in basins:
        mask = obs_mask[bid]
        a = M.acf1(obs[bid], mask)
        b = M.baseflow_index(obs[bid], mask)
        signatures[bid] = {
            "acf1_obs": a.value if a.defined else None,
            "bfi_obs": b.value if b.defined else None,
            "coverage": float(mask.mean()) if mask.size else 0.0,
        }

    aggregates: dict = {"members": {}, "partial": bool(failed_members)}
    for member, _ in scored:
        member_rows = [r for r in rows if r.member == member]
        entry = {}
        for key in ("nse", "kge"):
            vals = [getattr(r, key) for r in member_rows]
            defined = [v.value for v in vals if v.defined]
            entry[f"median_{key}"] = float(np.median(defined)) if defined else None
            entry[f"n_undefined_{key}"] = len(vals) - len(defined)
        aggregates["members"][member] = entry

    return EvalReport(
        label=label,
        rows=rows,
        member_order=[m for m, _ in scored],
        signatures=signatures,
        aggregates=aggregates,
        failed_members=failed_members,
    )


def _metric_cell(v: M.MetricValue) -> str:
    return repr(v.value) if v.defined else f"undefined({v.reason})"


def write_report(report: EvalReport, csv_path, json_path=None) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["basin_id", "member", "nse", "kge", "n_obs"])
        for r in report.rows:
            w.writerow([r.basin_id, r.member, _metric_cell(r.nse), _metric_cell(r.kge), r.n_obs])
    if json_path is not None:
        payload = {
            "label": report.label,
            "member_order": report.member_order,
            "aggregates": report.aggregates,
            "signatures": report.signatures,
            "failed_members": report.failed_members,
        }
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_report_rows(csv_path) -> list[dict]:
    with open(csv_path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --- ensemble execution -----------------------------------------------------


def _run_member(args: tuple) -> tuple[str, dict[str, np.ndarray] | None, str | None, str | None]:
    """Train one member and predict every test basin. Returns
    (member, predictions, checkpoint path, error)."""
    (member, selection, seed, base_cfg, catalog, series, plan, train_fdcs, test_fdcs, run_dir) = args
    try:
        cfg = TrainConfig(
            **{
                **base_cfg,
                "selection": selection,
                "seed": seed,
            }
        )
        data = build_train_data(
            catalog, series, list(plan.train_basins), plan.train_range, cfg,
            train_fdcs if cfg.use_fdc else None,
        )
        ckpt_path = None
        trace_path = None
        if run_dir is not None:
            safe = member.replace(":", "_")
            ckpt_path = f"{run_dir}/checkpoints/{safe}.ckpt"
            trace_path = f"{run_dir}/traces/{safe}.csv"
        model, _ = train(data, cfg, trace_path=trace_path, checkpoint_path=ckpt_path)
        preds = {}
        for bid in plan.test_basins:
            fdc_norm = None
            if cfg.use_fdc:
                fdc_norm = normalize_fdc(test_fdcs[bid], data.fdc_entry)
            preds[bid] = predict(model, data.stats, catalog, series[bid], plan.test_range, fdc_norm)
        return member, preds, ckpt_path, None
    except Exception as e:  # surviving members still report
        return member, None, None, f"{type(e).__name__}: {e}"


def run_ensemble(
    catalog: Catalog,
    series: dict[str, DailySeries],
    plan: SplitPlan,
    spec: EnsembleSpec,
    base_config: TrainConfig,
    run_dir=None,
    max_workers: int = 1,
    scenario_seed: int | None = None,
) -> tuple[EvalReport, FdcAssignment | None, dict[str, str]]:
    """Train the full ensemble on one SplitPlan and score the test basins.

    Returns the report, the FDC assignment (None without FDC use), and the
    member-to-checkpoint-path map."""
    if run_dir is not None:
        from pathlib import Path

        Path(run_dir, "checkpoints").mkdir(parents=True, exist_ok=True)
        Path(run_dir, "traces").mkdir(parents=True, exist_ok=True)

    store = FdcStore(series, plan.train_range)
    train_fdcs = None
    assignment = None
    if spec.use_fdc:
        train_fdcs = {bid: store.get(bid) for bid in plan.train_basins}
        assignment = apply_fdc_scenario(
            catalog, plan, spec.fraction,
            scenario_seed if scenario_seed is not None else 0, store,
        )

    base_cfg = train_config_dict(base_config)
    base_cfg["use_fdc"] = spec.use_fdc
    base_cfg["encoder"] = base_config.encoder
    base_cfg["five_attributes"] = base_config.five_attributes
    base_cfg.pop("seed", None)
    base_cfg.pop("selection", None)

    jobs = [
        (member, sel, seed, base_cfg, catalog, series, plan, train_fdcs,
         assignment.fdcs if assignment else None, str(run_dir) if run_dir else None)
        for member, sel, seed in spec.members()
    ]
    if max_workers <= 1 or len(jobs) == 1:
        results = [_run_member(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_run_member, jobs))

    member_preds: dict[str, dict[str, np.ndarray]] = {}
    failed = []
    checkpoints = {}
    for member, preds, ckpt, err in results:
        if err is not None:
            failed.append(f"{member}: {err}")
        else:
            member_preds[member] = preds
            if ckpt:
                checkpoints[member] = ckpt

    obs = {}
    obs_mask = {}
    for bid in plan.test_basins:
        q, m = _test_obs(series[bid], plan.test_range)
        obs[bid] = q
        obs_mask[bid] = m

    member_order = [m for m, _, _ in spec.members()]
    selection_of = {m: sel for m, sel, _ in spec.members()}
    report = assemble_report(plan.label, member_preds, selection_of, member_order, obs, obs_mask, failed)
    return report, assignment, checkpoints


def _test_obs(series: DailySeries, rng: DateRange) -> tuple[np.ndarray, np.ndarray]:
    from .training import range_matrix

    values, mask = range_matrix(series, rng)
    q = series.var_index(QVAR)
    return values[:, q], mask[:, q]


def export_features(
    model: StreamflowModel,
    fdc_entry,
    catalog: Catalog,
    basin_fdcs: dict[str, Fdc],
    signatures: dict[str, dict] | None,
    path,
) -> list[dict]:
    """Eval-mode encoder features per basin, joined with attributes and
    observed-flow signatures for correlation analysis."""
    e_dim = model.config.encoder.out_features
    feat_cols = [f"f{i + 1:03d}" for i in range(e_dim)]
    attr_cols = list(catalog.attribute_names)
    rows = []
    for bid in sorted(basin_fdcs):
        features = encode_features(model, normalize_fdc(basin_fdcs[bid], fdc_entry))
        row = {"basin_id": bid}
        row.update({c: float(v) for c, v in zip(feat_cols, features)})
        row.update({c: catalog[bid].attributes[c] for c in attr_cols})
        sig = (signatures or {}).get(bid, {})
        row["acf1_obs"] = sig.get("acf1_obs")
        row["bfi_obs"] = sig.get("bfi_obs")
        rows.append(row)
    header = ["basin_id"] + feat_cols + attr_cols + ["acf1_obs", "bfi_obs"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[c] if not isinstance(row[c], float) else repr(row[c]) for c in header])
    return rows


def config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, manifest: dict) -> None:
    manifest = dict(manifest)
    manifest.setdefault("tool_version", _version)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
