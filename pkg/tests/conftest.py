import datetime
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fdclstm.catalog import DateRange, load_catalog, load_daily
from fdclstm.synth import make_world


@pytest.fixture(scope="session")
def small_world(tmp_path_factory):
    """12 basins, 2 regions, 500 days starting 2000-01-01, loaded once."""
    root = tmp_path_factory.mktemp("world")
    world = make_world(12, 2, seed=101, out_dir=root, days=500)
    catalog = load_catalog(root / "attributes.csv", root / "gauges.csv", root / "regions.csv")
    series = {
        b.id: load_daily(root / "forcing" / f"{b.id}.csv", root / "flow" / f"{b.id}.csv", b)
        for b in catalog
    }
    return {"root": root, "world": world, "catalog": catalog, "series": series}


@pytest.fixture(scope="session")
def small_ranges():
    train = DateRange(datetime.date(2000, 1, 1), datetime.date(2000, 12, 31))
    test = DateRange(datetime.date(2001, 1, 1), datetime.date(2001, 5, 14))
    return train, test


def write_csv(path: Path, header: str, rows: list[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


@pytest.fixture()
def csv_writer():
    return write_csv


def daily_csvs(tmp_path: Path, basin_id: str, dates, prcp, q_cfs):
    """Write forcing/flow CSV pairs; entries may be strings to plant bad cells."""
    fdir = tmp_path / "forcing"
    qdir = tmp_path / "flow"
    fdir.mkdir(exist_ok=True)
    qdir.mkdir(exist_ok=True)
    frows = [f"{d.isoformat()},{p}" for d, p in zip(dates, prcp)]
    qrows = [f"{d.isoformat()},{q}" for d, q in zip(dates, q_cfs)]
    write_csv(fdir / f"{basin_id}.csv", "date,prcp", frows)
    write_csv(qdir / f"{basin_id}.csv", "date,q_cfs", qrows)
    return fdir / f"{basin_id}.csv", qdir / f"{basin_id}.csv"


@pytest.fixture()
def make_daily(tmp_path):
    def _make(basin_id="B1", n=120, start=datetime.date(2000, 1, 1), prcp=None, q_cfs=None):
        dates = [start + datetime.timedelta(days=i) for i in range(n)]
        if prcp is None:
            prcp = np.zeros(n)
        if q_cfs is None:
            q_cfs = np.ones(n)
        return daily_csvs(tmp_path, basin_id, dates, prcp, q_cfs)

    return _make
