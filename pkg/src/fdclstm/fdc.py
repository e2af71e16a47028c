"""Flow duration curves: computation, normalization, and nearest-basin migration.

An FDC here is 100 discrete values, one per exceedance probability
p_i = (i - 0.5)/100 for i = 1..100, estimated from unmasked daily discharge by
sorting descending and linearly interpolating between order statistics at
midpoint plotting positions. Ungauged basins borrow the FDC of the nearest
gauged basin by great-circle distance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .catalog import LOG_TRANSFORM, BasinRecord, DailySeries, DateRange, NormEntry, QVAR
from .errors import EmptyGaugedSet, InsufficientData, InvalidFraction, MalformedRow, MissingFile

N_POINTS = 100


def exceedance_probabilities() -> np.ndarray:
    return (np.arange(1, N_POINTS + 1) - 0.5) / N_POINTS


@dataclass(frozen=True)
class Fdc:
    basin_id: str
    values: np.ndarray
    source_basin_id: str
    period: DateRange

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.shape != (N_POINTS,):
            raise ValueError(f"FDC needs exactly {N_POINTS} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0.0):
            raise ValueError(f"FDC for {self.basin_id} has negative or non-finite values")
        if np.any(np.diff(v) > 0.0):
            raise ValueError(f"FDC for {self.basin_id} is not non-increasing")


def compute_fdc(series: DailySeries, period: DateRange) -> Fdc:
    """Empirical FDC of the unmasked discharge inside the period."""
    flows, mask = series.column(QVAR, period)
    q = np.sort(flows[mask])[::-1]
    n = q.size
    if n < N_POINTS:
        raise InsufficientData(n, N_POINTS)
    # descending order statistic j sits at exceedance (j + 0.5)/n; interpolate
    # linearly between neighbors and clamp beyond the end points
    positions = (np.arange(n) + 0.5) / n
    values = np.interp(exceedance_probabilities(), positions, q)
    return Fdc(basin_id=series.basin_id, values=values, source_basin_id=series.basin_id, period=period)


def fit_fdc_stats(fdcs: list[Fdc]) -> NormEntry:
    """One pooled (center, scale) over every training FDC entry, log-shifted."""
    from .catalog import _entry_from_samples  # shared z-score plumbing

    pooled = np.concatenate([f.values for f in fdcs]) if fdcs else np.empty(0)
    return _entry_from_samples("fdc", pooled, LOG_TRANSFORM)


def normalize_fdc(fdc: Fdc, stats: NormEntry) -> np.ndarray:
    return stats.normalize(fdc.values)


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a 6371.0 km sphere."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * 6371.0 * math.asin(math.sqrt(a))


def migrate_fdc(target: BasinRecord, gauged: list[tuple[BasinRecord, Fdc]]) -> Fdc:
    """FDC of the nearest gauged basin; ties go to the smallest basin id.

    If the target itself is in the gauged set its own FDC comes back
    unchanged. The result's source_basin_id records the donor.
    """
    if not gauged:
        raise EmptyGaugedSet(f"no gauged basins to migrate an FDC to {target.id}")
    best = None
    for basin, fdc in gauged:
        if basin.id == target.id:
            return fdc
        d = haversine_km(target.lat, target.lon, basin.lat, basin.lon)
        if best is None or (d, basin.id) < best[:2]:
            best = (d, basin.id, fdc)
    _, donor_id, fdc = best
    return Fdc(basin_id=target.id, values=fdc.values, source_basin_id=donor_id, period=fdc.period)


@dataclass(frozen=True)
class AvailabilityMask:
    available: dict[str, bool]
    fraction: float
    seed: int

    def __getitem__(self, basin_id: str) -> bool:
        return self.available[basin_id]

    @property
    def gauged_ids(self) -> list[str]:
        return sorted(b for b, ok in self.available.items() if ok)


def build_availability(basin_ids: list[str], fraction: float, seed: int) -> AvailabilityMask:
    """Mark round(fraction * N) basins (at least 1) as FDC-gauged, deterministically."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidFraction(f"fraction must be in (0, 1], got {fraction}")
    ids = sorted(basin_ids)
    n = len(ids)
    count = min(n, max(1, int(round(fraction * n))))
    gen = _rng.generator(seed, "fdc-availability", fraction)
    chosen = set(gen.choice(n, size=count, replace=False).tolist())
    available = {bid: (i in chosen) for i, bid in enumerate(ids)}
    return AvailabilityMask(available=available, fraction=fraction, seed=seed)


def export_fdcs(fdcs: list[Fdc], path) -> None:
    header = ["basin_id", "source_basin_id"] + [f"p{i:03d}" for i in range(1, N_POINTS + 1)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for f in fdcs:
            writer.writerow([f.basin_id, f.source_basin_id] + [repr(float(v)) for v in f.values])


def load_fdcs(path, period: DateRange) -> list[Fdc]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise MissingFile(str(path)) from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["basin_id", "source_basin_id"] or len(header) != N_POINTS + 2:
            raise MalformedRow(str(path), 1, "expected basin_id,source_basin_id,p001..p100")
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != N_POINTS + 2:
                raise MalformedRow(str(path), lineno, f"expected {N_POINTS + 2} cells, got {len(row)}")
            try:
                values = np.array([float(c) for c in row[2:]])
            except ValueError:
                raise MalformedRow(str(path), lineno, "non-numeric percentile cell") from None
            out.append(Fdc(basin_id=row[0], values=values, source_basin_id=row[1], period=period))
    return out
