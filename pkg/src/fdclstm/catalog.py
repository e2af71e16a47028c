"""Basin catalog ingestion and normalization.

Reads CAMELS-format CSV files (attributes, gauge coordinates, optional region
labels, per-basin daily forcing and flow) into immutable in-memory records.
Discharge is converted from ft³/s to mm/day using basin area at load time;
missing or negative flows are masked, never dropped, so the date axis stays
gapless.

Normalization statistics are fitted on training data only. Precipitation and
discharge get a shifted-log transform, log(x + 0.1), before z-scoring; other
variables and all static attributes are plain z-scored.
"""

from __future__ import annotations

import csv
import datetime
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DateGap,
    DegenerateVariable,
    DuplicateBasinId,
    MalformedRow,
    MissingAttribute,
    MissingFile,
    MissingGauge,
    UnitOverflow,
)

QVAR = "q_mm"
LOG_EPS = 0.1
CFS_TO_M3S = 0.0283168


@dataclass(frozen=True)
class DateRange:
    """Inclusive calendar date range."""

    start: datetime.date
    end: datetime.date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"range end {self.end} before start {self.start}")

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1

    def contains(self, d: datetime.date) -> bool:
        return self.start <= d <= self.end

    def overlaps(self, other: "DateRange") -> bool:
        return self.start <= other.end and other.start <= self.end

    @classmethod
    def parse(cls, start: str, end: str) -> "DateRange":
        return cls(datetime.date.fromisoformat(start), datetime.date.fromisoformat(end))


@dataclass(frozen=True)
class BasinRecord:
    id: str
    lat: float
    lon: float
    area_km2: float
    attributes: dict[str, float]
    region: str = ""


@dataclass(frozen=True)
class Catalog:
    basins: tuple[BasinRecord, ...]
    attribute_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {b.id: b for b in self.basins})

    def __len__(self):
        return len(self.basins)

    def __iter__(self):
        return iter(self.basins)

    def __getitem__(self, basin_id: str) -> BasinRecord:
        return self._by_id[basin_id]

    def __contains__(self, basin_id: str) -> bool:
        return basin_id in self._by_id

    @property
    def ids(self) -> list[str]:
        return [b.id for b in self.basins]


@dataclass
class DailySeries:
    """Gapless daily matrix [T x V] with an observed/missing mask."""

    basin_id: str
    start_date: datetime.date
    variables: tuple[str, ...]
    values: np.ndarray
    mask: np.ndarray  # True where observed

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def end_date(self) -> datetime.date:
        return self.start_date + datetime.timedelta(days=self.n_days - 1)

    def var_index(self, name: str) -> int:
        return self.variables.index(name)

    def window(self, rng: DateRange) -> tuple[int, int]:
        """Row slice [lo, hi) covering the intersection with rng."""
        lo = max(0, (rng.start - self.start_date).days)
        hi = min(self.n_days, (rng.end - self.start_date).days + 1)
        if hi <= lo:
            raise DateGap(f"{self.basin_id}: no data inside {rng.start}..{rng.end}")
        return lo, hi

    def column(self, name: str, rng: DateRange | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(values, mask) for one variable, optionally restricted to rng."""
        j = self.var_index(name)
        if rng is None:
            return self.values[:, j], self.mask[:, j]
        lo, hi = self.window(rng)
        return self.values[lo:hi, j], self.mask[lo:hi, j]


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(str(path)) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(str(path), 1, "empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(str(path), lineno, f"expected {len(header)} cells, got {len(row)}")
            rows.append((lineno, row))
    return header, rows


def _parse_float(cell: str, path, lineno: int, what: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise MalformedRow(str(path), lineno, f"{what}: cannot parse {cell!r} as a number") from None


def _parse_date(cell: str, path, lineno: int) -> datetime.date:
    try:
        return datetime.date.fromisoformat(cell)
    except ValueError:
        raise MalformedRow(str(path), lineno, f"cannot parse date {cell!r}") from None


def load_catalog(attr_path, gauge_path, region_path=None) -> Catalog:
    """Join attribute, gauge, and optional region files into a Catalog.

    Every basin in the attribute file must appear in the gauge file. Basins
    absent from the region file keep an empty region label; protocols that
    need regions reject those later.
    """
    header, rows = _read_rows(attr_path)
    if not header or header[0] != "basin_id":
        raise MalformedRow(str(attr_path), 1, "first column must be basin_id")
    attr_names = tuple(header[1:])

    gheader, grows = _read_rows(gauge_path)
    if gheader != ["basin_id", "lat", "lon", "area_km2"]:
        raise MalformedRow(str(gauge_path), 1, "header must be basin_id,lat,lon,area_km2")
    gauges: dict[str, tuple[float, float, float]] = {}
    for lineno, row in grows:
        bid = row[0]
        if bid in gauges:
            raise DuplicateBasinId(bid)
        lat = _parse_float(row[1], gauge_path, lineno, "lat")
        lon = _parse_float(row[2], gauge_path, lineno, "lon")
        area = _parse_float(row[3], gauge_path, lineno, "area_km2")
        if not -90.0 <= lat <= 90.0:
            raise MalformedRow(str(gauge_path), lineno, f"lat {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise MalformedRow(str(gauge_path), lineno, f"lon {lon} outside [-180, 180]")
        if not area > 0.0 or not math.isfinite(area):
            raise MalformedRow(str(gauge_path), lineno, f"area_km2 {area} must be positive")
        gauges[bid] = (lat, lon, area)

    regions: dict[str, str] = {}
    if region_path is not None:
        rheader, rrows = _read_rows(region_path)
        if rheader != ["basin_id", "region"]:
            raise MalformedRow(str(region_path), 1, "header must be basin_id,region")
        for lineno, row in rrows:
            regions[row[0]] = row[1]

    basins = []
    seen = set()
    for lineno, row in rows:
        bid = row[0]
        if bid in seen:
            raise DuplicateBasinId(bid)
        seen.add(bid)
        attrs = {}
        for name, cell in zip(attr_names, row[1:]):
            if cell.strip() == "":
                raise MissingAttribute(bid, name)
            attrs[name] = _parse_float(cell, attr_path, lineno, name)
        if bid not in gauges:
            raise MissingGauge(bid)
        lat, lon, area = gauges[bid]
        basins.append(
            BasinRecord(id=bid, lat=lat, lon=lon, area_km2=area, attributes=attrs, region=regions.get(bid, ""))
        )
    return Catalog(basins=tuple(basins), attribute_names=attr_names)


def cfs_to_mm_per_day(q_cfs: float, area_km2: float) -> float:
    """ft³/s to basin-average mm/day: volume rate over area, per day."""
    return q_cfs * CFS_TO_M3S * 86400.0 / (area_km2 * 1e6) * 1000.0


def _load_dated_table(path) -> tuple[list[str], list[datetime.date], list[list[str]], list[int]]:
    header, rows = _read_rows(path)
    if not header or header[0] != "date":
        raise MalformedRow(str(path), 1, "first column must be date")
    dates = []
    cells = []
    linenos = []
    prev = None
    for lineno, row in rows:
        d = _parse_date(row[0], path, lineno)
        if prev is not None and (d - prev).days != 1:
            raise DateGap(f"{path}: dates jump from {prev} to {d} at line {lineno}")
        prev = d
        dates.append(d)
        cells.append(row[1:])
        linenos.append(lineno)
    if not dates:
        raise MalformedRow(str(path), 1, "no data rows")
    return header[1:], dates, cells, linenos


def load_daily(forcing_path, flow_path, basin: BasinRecord) -> DailySeries:
    """Merge forcing and flow files onto their union date range.

    Discharge lands in mm/day under the name ``q_mm``. Blank cells and
    negative flows (the CAMELS -999 sentinel and kin) become masked entries.
    Non-finite discharge after conversion raises UnitOverflow.
    """
    fvars, fdates, fcells, flines = _load_dated_table(forcing_path)
    qvars, qdates, qcells, qlines = _load_dated_table(flow_path)
    if qvars != ["q_cfs"]:
        raise MalformedRow(str(flow_path), 1, "header must be date,q_cfs")

    if fdates[0] > qdates[-1] or qdates[0] > fdates[-1]:
        raise DateGap(
            f"{basin.id}: forcing ({fdates[0]}..{fdates[-1]}) and flow "
            f"({qdates[0]}..{qdates[-1]}) do not overlap"
        )

    start = min(fdates[0], qdates[0])
    end = max(fdates[-1], qdates[-1])
    n = (end - start).days + 1
    variables = tuple(fvars) + (QVAR,)
    values = np.zeros((n, len(variables)))
    mask = np.zeros((n, len(variables)), dtype=bool)

    f0 = (fdates[0] - start).days
    for i, row in enumerate(fcells):
        for j, cell in enumerate(row):
            if cell.strip() == "":
                continue
            v = _parse_float(cell, forcing_path, flines[i], fvars[j])
            if math.isfinite(v):
                values[f0 + i, j] = v
                mask[f0 + i, j] = True

    q0 = (qdates[0] - start).days
    qcol = len(fvars)
    for i, row in enumerate(qcells):
        cell = row[0]
        if cell.strip() == "":
            continue
        q_cfs = _parse_float(cell, flow_path, qlines[i], "q_cfs")
        if not math.isfinite(q_cfs):
            continue
        if q_cfs < 0.0:
            continue  # missing sentinel
        q_mm = cfs_to_mm_per_day(q_cfs, basin.area_km2)
        if not math.isfinite(q_mm):
            raise UnitOverflow(f"{basin.id}: q_cfs {q_cfs} converts to non-finite mm/day")
        values[q0 + i, qcol] = q_mm
        mask[q0 + i, qcol] = True

    return DailySeries(basin_id=basin.id, start_date=start, variables=variables, values=values, mask=mask)


# --- normalization ----------------------------------------------------------

LOG_TRANSFORM = "shifted-log"
IDENTITY_TRANSFORM = "identity"


@dataclass(frozen=True)
class NormEntry:
    transform: str  # identity | shifted-log
    center: float
    scale: float

    def normalize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.transform == LOG_TRANSFORM:
            x = np.log(x + LOG_EPS)
        return (x - self.center) / self.scale

    def denormalize(self, y):
        y = np.asarray(y, dtype=np.float64)
        x = y * self.scale + self.center
        if self.transform == LOG_TRANSFORM:
            x = np.exp(x) - LOG_EPS
        return x


@dataclass
class NormStats:
    """Per-variable and per-attribute centering/scaling, training data only."""

    variables: dict[str, NormEntry] = field(default_factory=dict)
    attributes: dict[str, NormEntry] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variables": {k: [e.transform, e.center, e.scale] for k, e in self.variables.items()},
            "attributes": {k: [e.transform, e.center, e.scale] for k, e in self.attributes.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            variables={k: NormEntry(t, c, s) for k, (t, c, s) in d["variables"].items()},
            attributes={k: NormEntry(t, c, s) for k, (t, c, s) in d["attributes"].items()},
        )


def _entry_from_samples(name: str, samples: np.ndarray, transform: str) -> NormEntry:
    if samples.size < 2:
        raise DegenerateVariable(name)
    x = samples
    if transform == LOG_TRANSFORM:
        x = np.log(x + LOG_EPS)
    center = float(x.mean())
    scale = float(x.std(ddof=1))
    if scale == 0.0 or not math.isfinite(scale):
        raise DegenerateVariable(name)
    return NormEntry(transform, center, scale)


def default_log_variables(variables) -> set[str]:
    """Variables that get the shifted-log transform: precipitation and discharge."""
    return {v for v in variables if v == QVAR or "prcp" in v.lower()}


def fit_norm_stats(
    catalog: Catalog,
    series: dict[str, DailySeries],
    train_basins: list[str],
    train_range: DateRange,
    log_variables: set[str] | None = None,
    attr_names=None,
) -> NormStats:
    """Pool unmasked training entries per variable; z-score attributes over train basins.

    attr_names restricts attribute statistics to the columns a model will
    consume (None means all). An unused attribute must not be able to fail
    the fit, e.g. a constant column under a no-attribute selection.
    """
    if not train_basins:
        raise DegenerateVariable("(empty training set)")
    variables = series[train_basins[0]].variables
    if log_variables is None:
        log_variables = default_log_variables(variables)
    if attr_names is None:
        attr_names = catalog.attribute_names

    stats = NormStats()
    for name in variables:
        pooled = []
        for bid in train_basins:
            vals, msk = series[bid].column(name, train_range)
            pooled.append(vals[msk])
        samples = np.concatenate(pooled) if pooled else np.empty(0)
        transform = LOG_TRANSFORM if name in log_variables else IDENTITY_TRANSFORM
        stats.variables[name] = _entry_from_samples(name, samples, transform)

    for name in attr_names:
        samples = np.array([catalog[bid].attributes[name] for bid in train_basins])
        stats.attributes[name] = _entry_from_samples(name, samples, IDENTITY_TRANSFORM)
    return stats


def normalize_series(s: DailySeries, stats: NormStats) -> DailySeries:
    """Normalized copy; masked cells are zeroed so they can never leak values."""
    out = np.zeros_like(s.values)
    for j, name in enumerate(s.variables):
        entry = stats.variables[name]
        col = s.mask[:, j]
        out[col, j] = entry.normalize(s.values[col, j])
    return DailySeries(
        basin_id=s.basin_id, start_date=s.start_date, variables=s.variables, values=out, mask=s.mask.copy()
    )


def attribute_vector(basin: BasinRecord, stats: NormStats, names) -> np.ndarray:
    return np.array([stats.attributes[n].normalize(basin.attributes[n]) for n in names], dtype=np.float64)
