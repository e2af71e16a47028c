import datetime

import numpy as np
import pytest

from fdclstm.catalog import (
    CFS_TO_M3S,
    LOG_EPS,
    LOG_TRANSFORM,
    QVAR,
    BasinRecord,
    DateRange,
    NormEntry,
    NormStats,
    _entry_from_samples,
    attribute_vector,
    cfs_to_mm_per_day,
    default_log_variables,
    fit_norm_stats,
    load_catalog,
    load_daily,
    normalize_series,
)
from fdclstm.errors import (
    DateGap,
    DegenerateVariable,
    DuplicateBasinId,
    MalformedRow,
    MissingAttribute,
    MissingFile,
    MissingGauge,
    UnitOverflow,
)

D = datetime.date


def basin(area=1.0, bid="B1"):
    return BasinRecord(id=bid, lat=40.0, lon=-100.0, area_km2=area, attributes={})


class TestDateRange:
    def test_basics(self):
        r = DateRange.parse("2000-01-01", "2000-01-10")
        assert r.n_days == 10
        assert r.contains(D(2000, 1, 10)) and not r.contains(D(2000, 1, 11))

    def test_overlaps(self):
        a = DateRange.parse("2000-01-01", "2000-06-30")
        b = DateRange.parse("2000-06-30", "2000-12-31")
        c = DateRange.parse("2000-07-01", "2000-12-31")
        assert a.overlaps(b) and b.overlaps(a)
        assert not a.overlaps(c)

    def test_reversed_rejected(self):
        with pytest.raises(ValueError):
            DateRange.parse("2000-01-02", "2000-01-01")


class TestLoadCatalog:
    def write_trio(self, csv_writer, tmp_path, attrs=None, gauges=None, regions=None):
        a = csv_writer(
            tmp_path / "attributes.csv",
            "basin_id,slope,forest",
            attrs if attrs is not None else ["B1,1.0,0.5", "B2,2.0,0.25"],
        )
        g = csv_writer(
            tmp_path / "gauges.csv",
            "basin_id,lat,lon,area_km2",
            gauges if gauges is not None else ["B1,40.0,-100.0,10.0", "B2,41.0,-101.0,20.0"],
        )
        r = None
        if regions is not None:
            r = csv_writer(tmp_path / "regions.csv", "basin_id,region", regions)
        return a, g, r

    def test_happy_path(self, csv_writer, tmp_path):
        a, g, r = self.write_trio(csv_writer, tmp_path, regions=["B1,R1", "B2,R2"])
        cat = load_catalog(a, g, r)
        assert len(cat) == 2
        assert cat.ids == ["B1", "B2"]
        assert cat.attribute_names == ("slope", "forest")
        assert cat["B1"].attributes == {"slope": 1.0, "forest": 0.5}
        assert cat["B2"].region == "R2"
        assert "B1" in cat and "B9" not in cat

    def test_region_file_optional(self, csv_writer, tmp_path):
        a, g, _ = self.write_trio(csv_writer, tmp_path)
        cat = load_catalog(a, g)
        assert cat["B1"].region == ""

    def test_missing_file(self, csv_writer, tmp_path):
        a, g, _ = self.write_trio(csv_writer, tmp_path)
        with pytest.raises(MissingFile):
            load_catalog(tmp_path / "nope.csv", g)

    def test_gauge_header_enforced(self, csv_writer, tmp_path):
        a, _, _ = self.write_trio(csv_writer, tmp_path)
        g = csv_writer(tmp_path / "bad.csv", "basin_id,lat,lon,area", ["B1,0,0,1", "B2,0,0,1"])
        with pytest.raises(MalformedRow) as e:
            load_catalog(a, g)
        assert e.value.line == 1

    def test_gauge_value_validation(self, csv_writer, tmp_path):
        cases = [
            "B1,95.0,-100.0,10.0",  # lat out of range
            "B1,40.0,181.0,10.0",  # lon out of range
            "B1,40.0,-100.0,0.0",  # non-positive area
            "B1,40.0,-100.0,-3.0",
            "B1,forty,-100.0,10.0",  # non-numeric
        ]
        for i, row in enumerate(cases):
            a, _, _ = self.write_trio(csv_writer, tmp_path, attrs=["B1,1.0,0.5"])
            g = csv_writer(tmp_path / f"g{i}.csv", "basin_id,lat,lon,area_km2", [row])
            with pytest.raises(MalformedRow) as e:
                load_catalog(a, g)
            assert e.value.line == 2

    def test_duplicate_basin(self, csv_writer, tmp_path):
        a, g, _ = self.write_trio(csv_writer, tmp_path, attrs=["B1,1.0,0.5", "B1,2.0,0.25"])
        with pytest.raises(DuplicateBasinId):
            load_catalog(a, g)

    def test_missing_gauge(self, csv_writer, tmp_path):
        a, g, _ = self.write_trio(csv_writer, tmp_path, gauges=["B1,40.0,-100.0,10.0"])
        with pytest.raises(MissingGauge):
            load_catalog(a, g)

    def test_blank_attribute(self, csv_writer, tmp_path):
        a, g, _ = self.write_trio(csv_writer, tmp_path, attrs=["B1,1.0,", "B2,2.0,0.25"])
        with pytest.raises(MissingAttribute) as e:
            load_catalog(a, g)
        assert e.value.basin_id == "B1" and e.value.name == "forest"

    def test_unparseable_attribute_reports_line(self, csv_writer, tmp_path):
        a, g, _ = self.write_trio(csv_writer, tmp_path, attrs=["B1,1.0,0.5", "B2,high,0.25"])
        with pytest.raises(MalformedRow) as e:
            load_catalog(a, g)
        assert e.value.line == 3

    def test_ragged_row(self, csv_writer, tmp_path):
        a, g, _ = self.write_trio(csv_writer, tmp_path, attrs=["B1,1.0,0.5", "B2,2.0"])
        with pytest.raises(MalformedRow) as e:
            load_catalog(a, g)
        assert e.value.line == 3

    def test_reload_identical(self, csv_writer, tmp_path):
        a, g, r = self.write_trio(csv_writer, tmp_path, regions=["B1,R1", "B2,R1"])
        assert load_catalog(a, g, r) == load_catalog(a, g, r)


class TestUnitConversion:
    def test_formula(self):
        q, area = 123.4, 56.7
        expected = q * CFS_TO_M3S * 86400.0 / (area * 1e6) * 1000.0
        assert cfs_to_mm_per_day(q, area) == expected

    def test_one_cfs_unit_area(self):
        # area chosen so 1 cfs is exactly 1 mm/day
        area = CFS_TO_M3S * 86400.0 / 1000.0
        assert cfs_to_mm_per_day(1.0, area) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_flow_inverse_in_area(self):
        assert cfs_to_mm_per_day(2.0, 10.0) == pytest.approx(2 * cfs_to_mm_per_day(1.0, 10.0))
        assert cfs_to_mm_per_day(1.0, 20.0) == pytest.approx(cfs_to_mm_per_day(1.0, 10.0) / 2)


class TestLoadDaily:
    def test_union_range_and_masks(self, make_daily, tmp_path, csv_writer):
        f, q = make_daily(n=10)
        # shift the flow file forward two days: union covers 12 days
        rows = (tmp_path / "flow" / "B1.csv").read_text().splitlines()
        shifted = [
            f"{D(2000, 1, 3) + datetime.timedelta(days=i)},1.0" for i in range(10)
        ]
        csv_writer(tmp_path / "flow" / "B1.csv", rows[0], shifted)
        s = load_daily(f, tmp_path / "flow" / "B1.csv", basin())
        assert s.n_days == 12
        assert s.start_date == D(2000, 1, 1)
        assert s.variables == ("prcp", QVAR)
        jq = s.var_index(QVAR)
        assert not s.mask[0, jq] and not s.mask[1, jq]
        assert s.mask[2:, jq].all()
        assert s.mask[:10, 0].all() and not s.mask[10:, 0].any()

    def test_blank_nan_negative_masked(self, make_daily):
        f, q = make_daily(n=6, q_cfs=["1.0", "", "nan", "-999", "2.0", "-0.5"])
        s = load_daily(f, q, basin())
        _, msk = s.column(QVAR)
        assert msk.tolist() == [True, False, False, False, True, False]

    def test_flow_converted_to_mm(self, make_daily):
        f, q = make_daily(n=5, q_cfs=np.full(5, 3.0))
        s = load_daily(f, q, basin(area=12.0))
        vals, msk = s.column(QVAR)
        assert np.allclose(vals[msk], cfs_to_mm_per_day(3.0, 12.0))

    def test_bad_cell_reports_line(self, make_daily):
        f, q = make_daily(n=5, q_cfs=["1.0", "1.0", "oops", "1.0", "1.0"])
        with pytest.raises(MalformedRow) as e:
            load_daily(f, q, basin())
        assert e.value.line == 4  # header is line 1

    def test_date_gap_within_file(self, csv_writer, tmp_path, make_daily):
        f, q = make_daily(n=5)
        csv_writer(
            tmp_path / "flow" / "B1.csv",
            "date,q_cfs",
            ["2000-01-01,1.0", "2000-01-02,1.0", "2000-01-04,1.0"],
        )
        with pytest.raises(DateGap):
            load_daily(f, tmp_path / "flow" / "B1.csv", basin())

    def test_no_overlap(self, csv_writer, tmp_path, make_daily):
        f, q = make_daily(n=5)
        csv_writer(tmp_path / "flow" / "B1.csv", "date,q_cfs", ["2001-06-01,1.0"])
        with pytest.raises(DateGap):
            load_daily(f, tmp_path / "flow" / "B1.csv", basin())

    def test_flow_header_enforced(self, csv_writer, tmp_path, make_daily):
        f, q = make_daily(n=5)
        csv_writer(tmp_path / "flow" / "B1.csv", "date,discharge", ["2000-01-01,1.0"])
        with pytest.raises(MalformedRow):
            load_daily(f, tmp_path / "flow" / "B1.csv", basin())

    def test_unit_overflow(self, make_daily):
        f, q = make_daily(n=5, q_cfs=["1e308", "1.0", "1.0", "1.0", "1.0"])
        with pytest.raises(UnitOverflow):
            load_daily(f, q, basin(area=1e-6))

    def test_window_and_column(self, make_daily):
        f, q = make_daily(n=30)
        s = load_daily(f, q, basin())
        rng = DateRange(D(2000, 1, 11), D(2000, 1, 20))
        lo, hi = s.window(rng)
        assert (lo, hi) == (10, 20)
        vals, msk = s.column(QVAR, rng)
        assert vals.shape == (10,) and msk.all()
        with pytest.raises(DateGap):
            s.window(DateRange(D(2005, 1, 1), D(2005, 2, 1)))


class TestNormalization:
    def test_entry_from_two_samples(self):
        e = _entry_from_samples("x", np.array([2.0, 4.0]), "identity")
        assert e.center == 3.0
        assert e.scale == pytest.approx(np.sqrt(2.0), rel=1e-15)  # ddof=1

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateVariable):
            _entry_from_samples("x", np.array([5.0]), "identity")
        with pytest.raises(DegenerateVariable):
            _entry_from_samples("x", np.full(10, 7.0), "identity")

    def test_log_entry_uses_shifted_log(self):
        samples = np.array([0.0, 1.0, 10.0])
        e = _entry_from_samples("q", samples, LOG_TRANSFORM)
        logged = np.log(samples + LOG_EPS)
        assert e.center == pytest.approx(logged.mean())
        assert e.scale == pytest.approx(logged.std(ddof=1))

    def test_roundtrip(self):
        x = np.array([0.0, 0.5, 3.0, 250.0])
        for transform in ("identity", LOG_TRANSFORM):
            e = _entry_from_samples("v", x, transform)
            back = e.denormalize(e.normalize(x))
            assert np.max(np.abs(back - x)) < 1e-10

    def test_default_log_variables(self):
        assert default_log_variables(("prcp", "tmax", QVAR, "srad")) == {"prcp", QVAR}

    def test_fit_and_normalize(self, make_daily):
        f, q = make_daily(n=40, prcp=np.arange(40.0), q_cfs=["-999" if i % 7 == 0 else "2.0" for i in range(40)])
        b = basin()
        s = load_daily(f, q, b)
        cat_basin = BasinRecord(id="B1", lat=0.0, lon=0.0, area_km2=1.0, attributes={"slope": 1.0})
        cat_basin2 = BasinRecord(id="B2", lat=0.0, lon=0.0, area_km2=1.0, attributes={"slope": 3.0})
        from fdclstm.catalog import Catalog

        cat = Catalog(basins=(cat_basin, cat_basin2), attribute_names=("slope",))
        rng = DateRange(D(2000, 1, 1), D(2000, 2, 9))
        stats = fit_norm_stats(cat, {"B1": s, "B2": s}, ["B1", "B2"], rng)
        assert stats.variables["prcp"].transform == LOG_TRANSFORM
        assert stats.variables[QVAR].transform == LOG_TRANSFORM
        assert stats.attributes["slope"].center == 2.0

        ns = normalize_series(s, stats)
        assert ns.values[np.logical_not(ns.mask)].tolist() == [0.0] * int(np.logical_not(ns.mask).sum())
        j = s.var_index("prcp")
        expected = stats.variables["prcp"].normalize(s.values[5, j])
        assert ns.values[5, j] == pytest.approx(expected, rel=1e-14)

        vec = attribute_vector(cat_basin, stats, ["slope"])
        assert vec.shape == (1,)
        assert vec[0] == pytest.approx((1.0 - 2.0) / stats.attributes["slope"].scale)

    def test_stats_dict_roundtrip(self):
        stats = NormStats(
            variables={"prcp": NormEntry(LOG_TRANSFORM, 0.4, 1.3)},
            attributes={"slope": NormEntry("identity", 2.0, 0.7)},
        )
        again = NormStats.from_dict(stats.to_dict())
        assert again == stats

    def test_empty_train_set_rejected(self, small_world, small_ranges):
        with pytest.raises(DegenerateVariable):
            fit_norm_stats(small_world["catalog"], small_world["series"], [], small_ranges[0])
