"""Synthetic multi-basin worlds with linear-reservoir physics.

Each basin routes Bernoulli-exponential rainfall through two parallel linear
reservoirs: a fast store with coefficient k_res and a slow store with
coefficient k_res/10. The slow-store share phi controls the baseflow
character, so flow-duration shape carries real information about a basin that
the decoy attributes do not. Regions get systematically shifted (k_res, phi)
distributions, which makes whole-region holdout genuinely extrapolative.

Worlds are written in the exact CSV formats the catalog module reads, so
synthetic and real data share one ingestion path. Ground truth lands in
world.json.
"""

from __future__ import annotations

import csv
import datetime
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as _rng
from .catalog import CFS_TO_M3S, QVAR, DailySeries

DEFAULT_START = datetime.date(2000, 1, 1)


@dataclass(frozen=True)
class SynthBasinSpec:
    id: str
    lat: float
    lon: float
    area_km2: float
    k_res: float  # fast-store coefficient per day, in (0, 1)
    phi: float  # slow-store rain share, in [0, 1]
    rain_mean: float  # mm on wet days
    wet_prob: float
    seed: int
    region: str = ""
    phi_class: int = -1


def simulate(
    spec: SynthBasinSpec,
    days: int,
    start: datetime.date = DEFAULT_START,
    s0_fast: float = 0.0,
    s0_slow: float = 0.0,
) -> DailySeries:
    """Run the two-reservoir model; returns forcing P and discharge Q in mm/day.

    Outflow is drawn from storage carried into the day; the day's rain enters
    storage afterwards, so a dry spell gives exact geometric recession
    Q_t = k * S_0 * (1 - k)^t per store and mass balances to round-off.
    """
    gen = _rng.generator(spec.seed, "rain", spec.id)
    wet = gen.random(days) < spec.wet_prob
    p = np.where(wet, gen.exponential(spec.rain_mean, days), 0.0)

    k_fast = spec.k_res
    k_slow = spec.k_res / 10.0
    s_fast = s0_fast
    s_slow = s0_slow
    q = np.empty(days)
    for t in range(days):
        out = k_fast * s_fast + k_slow * s_slow
        q[t] = out
        s_fast += (1.0 - spec.phi) * p[t] - k_fast * s_fast
        s_slow += spec.phi * p[t] - k_slow * s_slow

    values = np.column_stack([p, q])
    return DailySeries(
        basin_id=spec.id,
        start_date=start,
        variables=("prcp", QVAR),
        values=values,
        mask=np.ones_like(values, dtype=bool),
    )


def _region_params(region_index: int, n_regions: int) -> tuple[tuple[float, float], tuple[float, float]]:
    # slide disjoint (k_res, phi) windows across regions so held-out regions
    # sit outside the training distribution
    frac = region_index / max(1, n_regions - 1) if n_regions > 1 else 0.0
    k_lo = 0.15 + 0.30 * frac
    phi_lo = 0.15 + 0.50 * frac
    return (k_lo, k_lo + 0.15), (phi_lo, phi_lo + 0.20)


def make_world(
    n_basins: int,
    n_regions: int,
    seed: int,
    out_dir,
    days: int = 1095,
    start: datetime.date = DEFAULT_START,
    phi_classes: int | None = None,
) -> dict:
    """Generate and write a world; returns the ground-truth dictionary.

    With phi_classes set, phi is drawn from that many well-separated class
    values (round-robin over basins) instead of the regional window, and each
    basin's class index is recorded for signal-recovery checks.
    """
    if not 1 <= n_regions <= n_basins:
        raise ValueError(f"need n_basins >= n_regions >= 1, got {n_basins}, {n_regions}")
    out = Path(out_dir)
    (out / "forcing").mkdir(parents=True, exist_ok=True)
    (out / "flow").mkdir(parents=True, exist_ok=True)

    gen = _rng.generator(seed, "world")
    specs = []
    truth = []
    for i in range(n_basins):
        region_index = i % n_regions
        (k_lo, k_hi), (phi_lo, phi_hi) = _region_params(region_index, n_regions)
        k_res = float(gen.uniform(k_lo, k_hi))
        if phi_classes is not None:
            phi_class = i % phi_classes
            # classes spread over [0.1, 0.9]; jitter keeps basins distinct
            base = 0.1 + 0.8 * phi_class / max(1, phi_classes - 1) if phi_classes > 1 else 0.5
            phi = float(np.clip(base + gen.uniform(-0.04, 0.04), 0.0, 1.0))
        else:
            phi_class = -1
            phi = float(gen.uniform(phi_lo, phi_hi))
        spec = SynthBasinSpec(
            id=f"S{i + 1:04d}",
            lat=round(28.0 + 8.0 * region_index + float(gen.uniform(0.0, 6.0)), 4),
            lon=round(-120.0 + float(gen.uniform(0.0, 30.0)), 4),
            area_km2=round(float(gen.uniform(200.0, 2000.0)), 2),
            k_res=k_res,
            phi=phi,
            rain_mean=float(gen.uniform(4.0, 12.0)),
            wet_prob=float(gen.uniform(0.2, 0.45)),
            seed=_rng.derive_seed(seed, "basin", i),
            region=f"R{region_index + 1}",
            phi_class=phi_class,
        )
        specs.append(spec)

        attr_gen = _rng.generator(seed, "attrs", spec.id)
        truth.append(
            {
                "id": spec.id,
                "lat": spec.lat,
                "lon": spec.lon,
                "area_km2": spec.area_km2,
                "region": spec.region,
                "k_res": spec.k_res,
                "phi": spec.phi,
                "phi_class": spec.phi_class,
                "rain_mean": spec.rain_mean,
                "wet_prob": spec.wet_prob,
                "attrs": {
                    "store_decay": spec.k_res + float(attr_gen.normal(0.0, 0.02)),
                    "slow_fraction": spec.phi + float(attr_gen.normal(0.0, 0.05)),
                    "decoy_a": float(attr_gen.normal(0.0, 1.0)),
                    "decoy_b": float(attr_gen.normal(0.0, 1.0)),
                },
            }
        )

    with open(out / "attributes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["basin_id", "store_decay", "slow_fraction", "decoy_a", "decoy_b"])
        for t in truth:
            a = t["attrs"]
            w.writerow([t["id"]] + [repr(a[k]) for k in ("store_decay", "slow_fraction", "decoy_a", "decoy_b")])

    with open(out / "gauges.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["basin_id", "lat", "lon", "area_km2"])
        for t in truth:
            w.writerow([t["id"], repr(t["lat"]), repr(t["lon"]), repr(t["area_km2"])])

    with open(out / "regions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["basin_id", "region"])
        for t in truth:
            w.writerow([t["id"], t["region"]])

    for spec in specs:
        series = simulate(spec, days, start)
        dates = [start + datetime.timedelta(days=d) for d in range(days)]
        with open(out / "forcing" / f"{spec.id}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "prcp"])
            for d, row in zip(dates, series.values):
                w.writerow([d.isoformat(), repr(float(row[0]))])
        # flow files carry q_cfs so the ingestion unit conversion is exercised
        to_cfs = spec.area_km2 * 1e6 / 1000.0 / 86400.0 / CFS_TO_M3S
        with open(out / "flow" / f"{spec.id}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "q_cfs"])
            for d, row in zip(dates, series.values):
                w.writerow([d.isoformat(), repr(float(row[1]) * to_cfs)])

    world = {
        "n_basins": n_basins,
        "n_regions": n_regions,
        "seed": seed,
        "days": days,
        "start_date": start.isoformat(),
        "phi_classes": phi_classes,
        "basins": truth,
    }
    with open(out / "world.json", "w", encoding="utf-8") as fh:
        json.dump(world, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return world
