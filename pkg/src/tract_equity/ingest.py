"""Parsing and validation of parcel records and tract demographics.

Both readers are tolerant: a row that fails validation becomes a ``Reject``
carrying its line number and reason, and parsing continues. Structural
problems (a required column missing from the header) raise ``MissingColumn``.

Column layouts are configurable through ``ParcelSchema`` / ``DemographicsSchema``;
the defaults match the documented ``parcels.csv`` and ``tracts.csv`` files.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .domain import RACES, GeoId, OwnerClass, RaceCategory
from .errors import MalformedGeoId, MissingColumn, UnknownTract

log = logging.getLogger(__name__)

# Shares within this distance of 1 are renormalised; anything further is rejected.
SHARE_SUM_TOLERANCE = 0.005
DEFAULT_MIN_PROPERTIES = 100

_TRUE = {"1", "true", "t", "yes", "y", "urban", "u"}
_FALSE = {"0", "false", "f", "no", "n", "rural", "r"}


@dataclass(frozen=True)
class ParcelRecord:
    parcel_id: str
    geoid: GeoId
    assessed_value: float
    owner_name_raw: str
    owner_type: OwnerClass | None = None

    def __post_init__(self) -> None:
        if not (self.assessed_value >= 0) or math.isinf(self.assessed_value):
            raise ValueError(f"assessed_value must be finite and >= 0, got {self.assessed_value!r}")
        if not self.owner_name_raw.strip():
            raise ValueError("owner_name_raw is empty")


@dataclass(frozen=True)
class TractDemographics:
    geoid: GeoId
    total_population: int
    pop_share: tuple[float, ...]  # indexed by RaceCategory
    median_income: float | None = None
    census_urban: bool = True

    def share(self, race: RaceCategory) -> float:
        return self.pop_share[int(race)]


@dataclass(frozen=True)
class Reject:
    row_number: int
    reason: str
    raw_line: str


@dataclass(frozen=True)
class ParseResult:
    records: list
    rejects: list[Reject]


@dataclass(frozen=True)
class ParcelSchema:
    """Maps logical parcel fields to column names in the input file."""

    parcel_id: str = "parcel_id"
    geoid: str = "geoid"
    assessed_value: str = "assessed_value"
    owner_name: str = "owner_name"
    owner_type: str | None = "owner_type"  # optional column, used when present
    delimiter: str = ","

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str | None]) -> "ParcelSchema":
        return cls(**dict(mapping))


@dataclass(frozen=True)
class DemographicsSchema:
    geoid: str = "geoid"
    total_population: str = "total_pop"
    shares: tuple[str, ...] = (
        "share_white",
        "share_black",
        "share_hispanic",
        "share_asian",
        "share_other",
    )
    median_income: str = "median_income"
    census_urban: str = "census_urban"
    delimiter: str = ","

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "DemographicsSchema":
        data = dict(mapping)
        if "shares" in data:
            data["shares"] = tuple(data["shares"])  # type: ignore[arg-type]
        return cls(**data)  # type: ignore[arg-type]


@dataclass(frozen=True)
class Dataset:
    """Parcels plus the tract table they resolve against. Immutable."""

    parcels: tuple[ParcelRecord, ...]
    tracts: Mapping[GeoId, TractDemographics]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parcels", tuple(self.parcels))
        object.__setattr__(self, "tracts", MappingProxyType(dict(self.tracts)))
        missing = {p.geoid for p in self.parcels} - set(self.tracts)
        if missing:
            raise UnknownTract(f"parcels reference tracts absent from the tract table: {sorted(missing)[:5]}")

    def parcels_by_tract(self) -> dict[GeoId, list[ParcelRecord]]:
        groups: dict[GeoId, list[ParcelRecord]] = {}
        for p in self.parcels:
            groups.setdefault(p.geoid, []).append(p)
        return dict(sorted(groups.items()))


@dataclass(frozen=True)
class FilterResult:
    dataset: Dataset
    excluded_tracts: tuple[GeoId, ...]

    @property
    def n_excluded(self) -> int:
        return len(self.excluded_tracts)


# -- row helpers ------------------------------------------------------------


def _raw_line(row: Sequence[str], delimiter: str) -> str:
    buf = io.StringIO()
    csv.writer(buf, delimiter=delimiter, lineterminator="").writerow(row)
    return buf.getvalue()


def _read_rows(stream: IO[str], delimiter: str) -> tuple[list[str], Iterator[tuple[int, list[str]]]]:
    reader = csv.reader(stream, delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn("input has no header row") from None
    if header and header[0].startswith("\ufeff"):
        header[0] = header[0][1:]

    def rows() -> Iterator[tuple[int, list[str]]]:
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            yield reader.line_num, row

    return header, rows()


def _index(header: list[str], columns: Iterable[str]) -> dict[str, int]:
    out = {}
    missing = []
    for col in columns:
        if col in header:
            out[col] = header.index(col)
        else:
            missing.append(col)
    if missing:
        raise MissingColumn(f"missing required column(s): {', '.join(missing)}")
    return out


def parse_money(raw: str) -> float:
    text = raw.strip().replace(",", "").replace("$", "")
    if not text:
        raise ValueError("empty value")
    value = float(text)
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"non-finite value {raw!r}")
    return value


def parse_bool(raw: str) -> bool:
    key = raw.strip().lower()
    if key in _TRUE:
        return True
    if key in _FALSE:
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# -- parcels ---------------------------------------------------------------


def _parcel_from_row(row: list[str], idx: dict[str, int], schema: ParcelSchema, type_col: int | None) -> ParcelRecord:
    """Build one record or raise (reason_code, message)."""
    parcel_id = row[idx[schema.parcel_id]].strip()
    if not parcel_id:
        raise _RowError("MissingParcelId", "empty parcel id")
    try:
        geoid = GeoId(row[idx[schema.geoid]])
    except MalformedGeoId as exc:
        raise _RowError("MalformedGeoId", str(exc)) from None
    try:
        value = parse_money(row[idx[schema.assessed_value]])
    except ValueError as exc:
        raise _RowError("InvalidValue", str(exc)) from None
    if value < 0:
        raise _RowError("NegativeValue", f"assessed value {value!r} is negative")
    name = row[idx[schema.owner_name]].strip()
    if not name:
        raise _RowError("EmptyName", "owner name is empty")
    owner_type = None
    if type_col is not None and row[type_col].strip():
        try:
            owner_type = OwnerClass(int(row[type_col]))
        except ValueError:
            raise _RowError("InvalidOwnerType", f"unknown owner type {row[type_col]!r}") from None
    return ParcelRecord(parcel_id, geoid, value, name, owner_type)


class _RowError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def parse_parcels(stream: IO[str], schema: ParcelSchema | None = None) -> ParseResult:
    """Parse a delimited parcel file into records and rejects (input order kept)."""
    schema = schema or ParcelSchema()
    header, rows = _read_rows(stream, schema.delimiter)
    idx = _index(header, [schema.parcel_id, schema.geoid, schema.assessed_value, schema.owner_name])
    type_col = header.index(schema.owner_type) if schema.owner_type and schema.owner_type in header else None

    records: list[ParcelRecord] = []
    rejects: list[Reject] = []
    seen: set[str] = set()
    for line_no, row in rows:
        raw = _raw_line(row, schema.delimiter)
        if len(row) != len(header):
            rejects.append(Reject(line_no, f"FieldCount: expected {len(header)} fields, got {len(row)}", raw))
            continue
        try:
            record = _parcel_from_row(row, idx, schema, type_col)
        except _RowError as exc:
            rejects.append(Reject(line_no, str(exc), raw))
            continue
        if record.parcel_id in seen:
            rejects.append(Reject(line_no, f"DuplicateParcel: {record.parcel_id} already defined", raw))
            continue
        seen.add(record.parcel_id)
        records.append(record)
    if rejects:
        log.info("parcels: %d accepted, %d rejected", len(records), len(rejects))
    return ParseResult(records, rejects)


def write_parcels(records: Iterable[ParcelRecord], stream: IO[str], schema: ParcelSchema | None = None) -> None:
    schema = schema or ParcelSchema()
    columns = [schema.parcel_id, schema.geoid, schema.assessed_value, schema.owner_name]
    if schema.owner_type:
        columns.append(schema.owner_type)
    w = csv.writer(stream, delimiter=schema.delimiter, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        row = [r.parcel_id, str(r.geoid), repr(r.assessed_value), r.owner_name_raw]
        if schema.owner_type:
            row.append("" if r.owner_type is None else str(int(r.owner_type)))
        w.writerow(row)


# -- demographics ----------------------------------------------------------


def _demographics_from_row(row: list[str], idx: dict[str, int], schema: DemographicsSchema, share_cols: list[int | None], income_col: int | None) -> TractDemographics:
    try:
        geoid = GeoId(row[idx[schema.geoid]])
    except MalformedGeoId as exc:
        raise _RowError("MalformedGeoId", str(exc)) from None
    try:
        total = int(float(row[idx[schema.total_population]].strip().replace(",", "")))
    except ValueError:
        raise _RowError("InvalidPopulation", f"bad population {row[idx[schema.total_population]]!r}") from None
    if total < 0:
        raise _RowError("NegativeValue", f"population {total} is negative")

    shares: list[float] = []
    for race, col in zip(RACES, share_cols):
        if col is None:
            continue
        try:
            s = float(row[col])
        except ValueError:
            raise _RowError("InvalidShare", f"bad {race.label} share {row[col]!r}") from None
        if not (0.0 <= s <= 1.0):
            raise _RowError("InvalidShare", f"{race.label} share {s!r} outside [0, 1]")
        shares.append(s)
    if share_cols[-1] is None:
        shares.append(max(0.0, 1.0 - math.fsum(shares)))

    total_share = math.fsum(shares)
    if total > 0 or total_share > 0:
        if abs(total_share - 1.0) > SHARE_SUM_TOLERANCE:
            raise _RowError("ShareSumOutOfRange", f"race shares sum to {total_share:.6f}")
        shares = [s / total_share for s in shares]

    income = None
    if income_col is not None and row[income_col].strip():
        try:
            income = parse_money(row[income_col])
        except ValueError as exc:
            raise _RowError("InvalidIncome", str(exc)) from None
        if income < 0:
            raise _RowError("NegativeValue", f"median income {income!r} is negative")
    try:
        urban = parse_bool(row[idx[schema.census_urban]])
    except ValueError as exc:
        raise _RowError("InvalidUrbanFlag", str(exc)) from None
    return TractDemographics(geoid, total, tuple(shares), income, urban)


def parse_demographics(stream: IO[str], schema: DemographicsSchema | None = None) -> ParseResult:
    """Parse tract demographics; four-share files get Other as the remainder."""
    schema = schema or DemographicsSchema()
    if len(schema.shares) != 5:
        raise ValueError("schema.shares must name five columns (the last may be absent from the file)")
    header, rows = _read_rows(stream, schema.delimiter)
    idx = _index(header, [schema.geoid, schema.total_population, *schema.shares[:4], schema.census_urban])
    share_cols: list[int | None] = [idx[c] for c in schema.shares[:4]]
    share_cols.append(header.index(schema.shares[4]) if schema.shares[4] in header else None)
    income_col = header.index(schema.median_income) if schema.median_income in header else None

    records: list[TractDemographics] = []
    rejects: list[Reject] = []
    seen: set[str] = set()
    for line_no, row in rows:
        raw = _raw_line(row, schema.delimiter)
        if len(row) != len(header):
            rejects.append(Reject(line_no, f"FieldCount: expected {len(header)} fields, got {len(row)}", raw))
            continue
        try:
            demo = _demographics_from_row(row, idx, schema, share_cols, income_col)
        except _RowError as exc:
            rejects.append(Reject(line_no, str(exc), raw))
            continue
        if demo.geoid in seen:
            rejects.append(Reject(line_no, f"DuplicateGeoid: {demo.geoid} already defined", raw))
            continue
        seen.add(demo.geoid)
        records.append(demo)
    return ParseResult(records, rejects)


def write_demographics(records: Iterable[TractDemographics], stream: IO[str], schema: DemographicsSchema | None = None) -> None:
    schema = schema or DemographicsSchema()
    w = csv.writer(stream, delimiter=schema.delimiter, lineterminator="\n")
    w.writerow([schema.geoid, schema.total_population, *schema.shares, schema.median_income, schema.census_urban])
    for d in records:
        w.writerow(
            [
                str(d.geoid),
                d.total_population,
                *(repr(s) for s in d.pop_share),
                "" if d.median_income is None else repr(d.median_income),
                "1" if d.census_urban else "0",
            ]
        )


def write_rejects(rejects: Iterable[Reject], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["row_number", "reason", "raw_line"])
    for r in rejects:
        w.writerow([r.row_number, r.reason, r.raw_line])


# -- dataset assembly -------------------------------------------------------


def assemble_dataset(parcels: Iterable[ParcelRecord], tracts: Iterable[TractDemographics]) -> tuple[Dataset, list[ParcelRecord]]:
    """Join parcels to the tract table; parcels with unknown tracts are quarantined."""
    table = {t.geoid: t for t in tracts}
    kept, quarantined = [], []
    for p in parcels:
        (kept if p.geoid in table else quarantined).append(p)
    if quarantined:
        log.warning("%d parcel(s) quarantined: tract not in demographics table", len(quarantined))
    return Dataset(tuple(kept), table), quarantined


def filter_small_tracts(ds: Dataset, min_properties: int = DEFAULT_MIN_PROPERTIES) -> FilterResult:
    """Drop tracts with fewer than ``min_properties`` parcels (exactly the minimum is kept)."""
    counts = Counter(p.geoid for p in ds.parcels)
    keep = {g for g, n in counts.items() if n >= min_properties}
    excluded = tuple(sorted(g for g in ds.tracts if g not in keep))
    parcels = tuple(p for p in ds.parcels if p.geoid in keep)
    tracts = {g: t for g, t in ds.tracts.items() if g in keep}
    if excluded:
        log.info("excluded %d tract(s) with fewer than %d properties", len(excluded), min_properties)
    return FilterResult(Dataset(parcels, tracts), excluded)


def with_owner_types(ds: Dataset, owner_types: Mapping[str, OwnerClass]) -> Dataset:
    parcels = tuple(replace(p, owner_type=owner_types[p.parcel_id]) for p in ds.parcels)
    return Dataset(parcels, ds.tracts)
