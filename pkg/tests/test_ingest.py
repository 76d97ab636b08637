import csv
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import demo, geoid
from tract_equity.domain import GeoId, OwnerClass, validate_geoid
from tract_equity.errors import MalformedGeoId, MissingColumn, UnknownTract
from tract_equity.ingest import (
    Dataset,
    DemographicsSchema,
    ParcelRecord,
    ParcelSchema,
    assemble_dataset,
    filter_small_tracts,
    parse_demographics,
    parse_money,
    parse_parcels,
    write_demographics,
    write_parcels,
)

PARCEL_HEADER = "parcel_id,geoid,assessed_value,owner_name\n"
TRACT_HEADER = "geoid,total_pop,share_white,share_black,share_hispanic,share_asian,share_other,median_income,census_urban\n"


def parcels(text):
    return parse_parcels(io.StringIO(PARCEL_HEADER + text))


def tracts(text, header=TRACT_HEADER):
    return parse_demographics(io.StringIO(header + text))


class TestGeoId:
    def test_valid(self):
        assert validate_geoid("36047034901") == "36047034901"

    def test_ten_characters(self):
        with pytest.raises(MalformedGeoId):
            validate_geoid("3604703490")

    def test_whitespace_is_stripped(self):
        g = validate_geoid(" 36005027900 ")
        assert g == "36005027900"
        assert (g.state, g.county, g.tract) == ("36", "005", "027900")

    @pytest.mark.parametrize("raw", ["36XX1234567", "", "360470349011", "00047034901", "３６０４７０３４９０１"])
    def test_rejects(self, raw):
        with pytest.raises(MalformedGeoId):
            GeoId(raw)


class TestParseParcels:
    def test_well_formed(self):
        res = parcels(
            "P1,36047034901,250000,\"SMITH, JOHN A\"\n"
            "P2,36047034901,\"$1,200.50\",ACME HOLDINGS LLC\n"
            "P3,36047034901,0,GARCIA MARIA\n"
        )
        assert len(res.records) == 3 and res.rejects == []
        assert res.records[1].assessed_value == pytest.approx(1200.50)
        assert res.records[0].owner_type is None

    def test_negative_value(self):
        res = parcels("P1,36047034901,-5,SMITH JOHN\n")
        assert res.records == []
        assert res.rejects[0].reason.startswith("NegativeValue")
        assert res.rejects[0].row_number == 2

    def test_malformed_geoid(self):
        res = parcels("P1,36XX1234567,5,SMITH JOHN\n")
        assert res.rejects[0].reason.startswith("MalformedGeoId")
        assert res.rejects[0].raw_line == "P1,36XX1234567,5,SMITH JOHN"

    @pytest.mark.parametrize(
        "row, code",
        [
            ("P1,36047034901,abc,SMITH\n", "InvalidValue"),
            ("P1,36047034901,5,   \n", "EmptyName"),
            (",36047034901,5,SMITH\n", "MissingParcelId"),
            ("P1,36047034901,5\n", "FieldCount"),
            ("P1,36047034901,nan,SMITH\n", "InvalidValue"),
        ],
    )
    def test_reject_codes(self, row, code):
        res = parcels(row)
        assert [r.reason.split(":")[0] for r in res.rejects] == [code]

    def test_duplicate_parcel_keeps_first(self):
        res = parcels("P1,36047034901,5,SMITH\nP1,36047034901,6,JONES\n")
        assert [r.owner_name_raw for r in res.records] == ["SMITH"]
        assert res.rejects[0].reason.startswith("DuplicateParcel")

    def test_missing_column_is_fatal(self):
        with pytest.raises(MissingColumn) as exc:
            parse_parcels(io.StringIO("parcel_id,geoid\nP1,36047034901\n"))
        assert "assessed_value" in str(exc.value)

    def test_schema_mapping_and_delimiter(self):
        text = "id;tract;av;name\nP1;36047034901;10;SMITH\n"
        schema = ParcelSchema(parcel_id="id", geoid="tract", assessed_value="av", owner_name="name", delimiter=";")
        res = parse_parcels(io.StringIO(text), schema)
        assert res.records[0].geoid == "36047034901"

    def test_owner_type_column_used_when_present(self):
        text = "parcel_id,geoid,assessed_value,owner_name,owner_type\nP1,36047034901,1,SMITH,2\nP2,36047034901,1,JONES,\n"
        res = parse_parcels(io.StringIO(text))
        assert [r.owner_type for r in res.records] == [OwnerClass.CORPORATE, None]

    def test_byte_order_mark(self):
        res = parse_parcels(io.StringIO("\ufeff" + PARCEL_HEADER + "P1,36047034901,5,SMITH\n"))
        assert len(res.records) == 1


class TestParseDemographics:
    def test_other_as_remainder(self):
        header = "geoid,total_pop,share_white,share_black,share_hispanic,share_asian,median_income,census_urban\n"
        res = tracts("36001000100,1200,0.778,0.038,0.086,0.052,55000,1\n", header)
        (t,) = res.records
        assert t.pop_share[4] == pytest.approx(0.046)
        assert sum(t.pop_share) == pytest.approx(1.0, abs=1e-12)

    def test_sum_too_low(self):
        res = tracts("36001000100,1200,0.5,0.2,0.1,0.05,0.05,1,1\n")
        assert res.rejects[0].reason.startswith("ShareSumOutOfRange")

    def test_sum_within_tolerance_is_renormalised(self):
        res = tracts("36001000100,1200,0.601,0.1,0.1,0.1,0.102,1,1\n")
        (t,) = res.records
        assert sum(t.pop_share) == pytest.approx(1.0, abs=1e-12)

    def test_optional_income_and_flag(self):
        res = tracts("36001000100,1200,0.6,0.1,0.1,0.1,0.1,,rural\n")
        (t,) = res.records
        assert t.median_income is None and t.census_urban is False

    def test_duplicate_geoid(self):
        row = "36001000100,1200,0.6,0.1,0.1,0.1,0.1,1,1\n"
        res = tracts(row + row)
        assert len(res.records) == 1 and res.rejects[0].reason.startswith("DuplicateGeoid")


class TestFilter:
    def _dataset(self, sizes):
        ps, ts = [], []
        for i, n in enumerate(sizes):
            g = geoid(i + 1)
            ts.append(demo(g, (0.6, 0.1, 0.1, 0.1)))
            ps += [ParcelRecord(f"{g}-{j}", g, 1.0, "SMITH JOHN") for j in range(n)]
        return Dataset(ps, {t.geoid: t for t in ts})

    def test_threshold_boundary(self):
        res = filter_small_tracts(self._dataset([99, 100]))
        assert list(res.dataset.tracts) == [geoid(2)]
        assert res.excluded_tracts == (geoid(1),)
        assert len(res.dataset.parcels) == 100

    def test_empty(self):
        res = filter_small_tracts(Dataset((), {}))
        assert res.dataset.parcels == () and dict(res.dataset.tracts) == {}

    @given(st.lists(st.integers(0, 12), max_size=8), st.integers(0, 12))
    def test_idempotent(self, sizes, k):
        once = filter_small_tracts(self._dataset(sizes), k).dataset
        twice = filter_small_tracts(once, k).dataset
        assert once == twice

    def test_tract_without_parcels_is_excluded(self):
        ds = self._dataset([0, 3])
        res = filter_small_tracts(ds, 1)
        assert geoid(1) in res.excluded_tracts


class TestDatasetIntegrity:
    def test_orphan_parcel_rejected_by_dataset(self):
        with pytest.raises(UnknownTract):
            Dataset([ParcelRecord("P1", geoid(1), 1.0, "SMITH")], {})

    def test_assemble_quarantines_orphans(self):
        t = demo(geoid(1), (0.6, 0.1, 0.1, 0.1))
        ds, quarantined = assemble_dataset(
            [ParcelRecord("P1", geoid(1), 1.0, "A"), ParcelRecord("P2", geoid(2), 1.0, "B")], [t]
        )
        assert [p.parcel_id for p in ds.parcels] == ["P1"]
        assert [p.parcel_id for p in quarantined] == ["P2"]
        assert all(p.geoid in ds.tracts for p in ds.parcels)


def test_parse_money():
    assert parse_money(" $1,234.5 ") == 1234.5
    with pytest.raises(ValueError):
        parse_money("")


# -- properties -------------------------------------------------------------------------

_name = st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ ,&-'.", min_size=1, max_size=20).filter(lambda s: s.strip())
_good_row = st.tuples(
    st.from_regex(r"P[0-9]{1,6}", fullmatch=True),
    st.sampled_from(["36047034901", "36005027900", "36001000100"]),
    st.floats(0, 1e9, allow_nan=False),
    _name,
)
_bad_row = st.sampled_from(
    [
        ["X", "36XX1234567", "1", "N"],
        ["X", "36047034901", "-1", "N"],
        ["X", "36047034901", "1"],
        ["X", "36047034901", "zz", "N"],
        ["", "36047034901", "1", "N"],
    ]
)


def _render(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["parcel_id", "geoid", "assessed_value", "owner_name"])
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


@given(st.lists(st.one_of(_good_row.map(lambda t: [t[0], t[1], repr(t[2]), t[3]]), _bad_row), max_size=30))
def test_partition_accepted_plus_rejected_is_input(rows):
    res = parse_parcels(io.StringIO(_render(rows)))
    assert len(res.records) + len(res.rejects) == len(rows)
    assert [r.row_number for r in res.rejects] == sorted(r.row_number for r in res.rejects)


@given(st.lists(_good_row, max_size=25, unique_by=lambda t: t[0]))
def test_parcel_round_trip(rows):
    first = parse_parcels(io.StringIO(_render([[a, b, repr(c), d] for a, b, c, d in rows])))
    buf = io.StringIO()
    write_parcels(first.records, buf)
    again = parse_parcels(io.StringIO(buf.getvalue()))
    assert again.records == first.records and again.rejects == []


_share_vec = st.lists(st.floats(0.01, 1.0), min_size=5, max_size=5).map(lambda v: [x / sum(v) for x in v])


@given(st.lists(st.tuples(st.integers(1, 999999), st.integers(0, 10**6), _share_vec, st.one_of(st.none(), st.floats(0, 3e5)), st.booleans()), max_size=15, unique_by=lambda t: t[0]))
def test_demographics_round_trip(rows):
    recs = [demo(geoid(i), s, pop, inc, urb) for i, pop, s, inc, urb in rows]
    buf = io.StringIO()
    write_demographics(recs, buf)
    res = parse_demographics(io.StringIO(buf.getvalue()))
    assert res.rejects == []
    for a, b in zip(res.records, recs):
        assert (a.geoid, a.total_population, a.median_income, a.census_urban) == (b.geoid, b.total_population, b.median_income, b.census_urban)
        assert a.pop_share == pytest.approx(b.pop_share, abs=1e-12)


def test_demographics_custom_schema():
    schema = DemographicsSchema(geoid="GEO", total_population="POP", shares=("W", "B", "H", "A", "O"), median_income="INC", census_urban="URB")
    res = parse_demographics(io.StringIO("GEO,POP,W,B,H,A,O,INC,URB\n36001000100,5,0.2,0.2,0.2,0.2,0.2,1,1\n"), schema)
    assert res.records[0].pop_share == (0.2,) * 5
