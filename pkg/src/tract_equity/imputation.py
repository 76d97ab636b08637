"""Owner race/ethnicity imputation.

Two sources produce the same per-parcel contract (a ``RaceDistribution`` and
its argmax category): the built-in BISG classifier, which combines a surname
prior with the tract's resident composition by Bayes' rule, and prediction
files produced by any external model.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from .domain import N_RACES, RACES, GeoId, OwnerClass, RaceCategory, RaceDistribution, argmax_race
from .entities import EntityRules, NameConvention, extract_surname
from .errors import (
    BothPriorsMissing,
    DuplicateParcel,
    InvalidDistribution,
    MissingColumn,
    MissingPrediction,
    UnclassifiedParcel,
    UnparseableName,
)
from .ingest import Dataset, Reject, TractDemographics

log = logging.getLogger(__name__)

PROB_COLUMNS = tuple(f"p_{r.label}" for r in RACES)
NATIONAL_KEY = "_NATIONAL_"
PRIOR_FLOOR = 1e-6
# External files usually carry rounded probabilities; rows within this of 1 are renormalised.
PREDICTION_SUM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class SurnamePriorTable:
    surnames: Mapping[str, RaceDistribution]
    national: RaceDistribution

    def __post_init__(self) -> None:
        if min(self.national.probs) <= 0.0:
            raise InvalidDistribution("national prior must be strictly positive in every category")

    def get(self, surname: str) -> RaceDistribution | None:
        return self.surnames.get(surname.strip().upper())


@dataclass(frozen=True)
class GeoPriorTable:
    tracts: Mapping[GeoId, RaceDistribution]

    @classmethod
    def from_demographics(cls, tracts: Iterable[TractDemographics]) -> "GeoPriorTable":
        table = {}
        for t in tracts:
            if t.total_population > 0 and math.fsum(t.pop_share) > 0:
                table[t.geoid] = RaceDistribution.from_weights(t.pop_share)
        return cls(table)

    def get(self, geoid: str) -> RaceDistribution | None:
        return self.tracts.get(geoid)  # type: ignore[call-overload]


def _read_probability_rows(stream: IO[str], key_column: str):
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn("input has no header row") from None
    missing = [c for c in (key_column, *PROB_COLUMNS) if c not in header]
    if missing:
        raise MissingColumn(f"missing required column(s): {', '.join(missing)}")
    key_i = header.index(key_column)
    prob_i = [header.index(c) for c in PROB_COLUMNS]
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        yield reader.line_num, row, row[key_i].strip() if key_i < len(row) else "", [
            row[i] if i < len(row) else "" for i in prob_i
        ]


def _distribution(values: list[str], tol: float) -> RaceDistribution:
    try:
        probs = [float(v) for v in values]
    except ValueError:
        raise InvalidDistribution(f"non-numeric probability in {values}") from None
    if any(not (0.0 <= p <= 1.0) for p in probs):
        raise InvalidDistribution(f"probability outside [0, 1] in {values}")
    total = math.fsum(probs)
    if abs(total - 1.0) > tol:
        raise InvalidDistribution(f"probabilities sum to {total:.6f}")
    return RaceDistribution.from_weights(probs)


def load_surname_priors(stream: IO[str], sum_tol: float = PREDICTION_SUM_TOLERANCE) -> SurnamePriorTable:
    """Read ``surname,p_white,...,p_other`` with one ``_NATIONAL_`` row for P(race)."""
    surnames: dict[str, RaceDistribution] = {}
    national = None
    for line_no, _row, key, values in _read_probability_rows(stream, "surname"):
        try:
            dist = _distribution(values, sum_tol)
        except InvalidDistribution as exc:
            raise InvalidDistribution(f"line {line_no}: {exc}") from None
        name = key.upper()
        if name == NATIONAL_KEY:
            national = dist
        elif name in surnames:
            raise ValueError(f"line {line_no}: surname {name} listed twice")
        elif name:
            surnames[name] = dist
    if national is None:
        raise MissingColumn(f"surname prior file has no {NATIONAL_KEY} row")
    return SurnamePriorTable(surnames, national)


def write_surname_priors(table: SurnamePriorTable, stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["surname", *PROB_COLUMNS])
    w.writerow([NATIONAL_KEY, *(repr(p) for p in table.national.probs)])
    for name in sorted(table.surnames):
        w.writerow([name, *(repr(p) for p in table.surnames[name].probs)])


def bayes_combine(
    surname_prior: RaceDistribution,
    geo_prior: RaceDistribution,
    national: RaceDistribution,
    floor: float = PRIOR_FLOOR,
) -> RaceDistribution:
    """posterior_r proportional to P(r|surname) * P(r|tract) / P(r)."""
    s, g, n = surname_prior.probs, geo_prior.probs, national.probs
    # A constant likelihood ratio cancels in the normalisation; return the other prior untouched.
    if len({s[i] / n[i] for i in range(N_RACES)}) == 1:
        return geo_prior
    if len({g[i] / n[i] for i in range(N_RACES)}) == 1:
        return surname_prior
    weights = [s[i] * g[i] / n[i] for i in range(N_RACES)]
    if math.fsum(weights) <= 0.0:
        # Priors with disjoint support: floor every entry so the product stays defined.
        weights = [max(s[i], floor) * max(g[i], floor) / max(n[i], floor) for i in range(N_RACES)]
    return RaceDistribution.from_weights(weights)


def bisg_posterior(
    surname: str,
    geoid: str,
    priors: SurnamePriorTable,
    geo: GeoPriorTable,
) -> RaceDistribution:
    s = priors.get(surname)
    g = geo.get(geoid)
    if s is None and g is None:
        raise BothPriorsMissing(f"no surname prior for {surname!r} and no tract prior for {geoid}")
    if s is None:
        return g  # type: ignore[return-value]
    if g is None:
        return s
    return bayes_combine(s, g, priors.national)


# -- external predictions --------------------------------------------------


@dataclass(frozen=True)
class PredictionLoad:
    predictions: dict[str, RaceDistribution]
    rejects: list[Reject]


def load_predictions(stream: IO[str], sum_tol: float = PREDICTION_SUM_TOLERANCE, strict: bool = False) -> PredictionLoad:
    """Read ``parcel_id,p_white,p_black,p_hispanic,p_asian,p_other``.

    Invalid rows and repeated parcel ids are returned as rejects (the first
    row for a parcel wins). With ``strict=True`` the first problem raises.
    """
    predictions: dict[str, RaceDistribution] = {}
    rejects: list[Reject] = []
    for line_no, row, parcel_id, values in _read_probability_rows(stream, "parcel_id"):
        raw = ",".join(row)
        if not parcel_id:
            problem: Exception = InvalidDistribution("empty parcel id")
        elif parcel_id in predictions:
            problem = DuplicateParcel(f"parcel {parcel_id} predicted more than once")
        else:
            try:
                predictions[parcel_id] = _distribution(values, sum_tol)
                continue
            except InvalidDistribution as exc:
                problem = exc
        if strict:
            raise type(problem)(f"line {line_no}: {problem}")
        rejects.append(Reject(line_no, f"{type(problem).__name__}: {problem}", raw))
    return PredictionLoad(predictions, rejects)


def write_predictions(predictions: Mapping[str, RaceDistribution], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["parcel_id", *PROB_COLUMNS])
    for pid in sorted(predictions):
        w.writerow([pid, *(repr(p) for p in predictions[pid].probs)])


# -- dataset-level orchestration --------------------------------------------


@dataclass(frozen=True)
class Prediction:
    distribution: RaceDistribution
    race: RaceCategory
    fallback: bool = False  # True when the national prior stood in for missing priors


class NonIndividual:
    """Marker for parcels owned by entities, which carry no race."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NON_INDIVIDUAL"


NON_INDIVIDUAL = NonIndividual()


@dataclass(frozen=True)
class BisgSource:
    priors: SurnamePriorTable
    geo: GeoPriorTable | None = None  # built from the dataset's tracts when omitted
    convention: NameConvention = NameConvention.LAST_FIRST
    rules: EntityRules | None = None
    national_fallback: bool = True  # False: BothPriorsMissing propagates


@dataclass(frozen=True)
class ExternalSource:
    predictions: Mapping[str, RaceDistribution]


@dataclass(frozen=True)
class ImputationResult:
    assignments: dict[str, Prediction | NonIndividual]
    fallbacks: tuple[str, ...] = field(default=())

    @property
    def races(self) -> dict[str, Prediction]:
        return {k: v for k, v in self.assignments.items() if isinstance(v, Prediction)}

    @property
    def non_individual(self) -> list[str]:
        return [k for k, v in self.assignments.items() if v is NON_INDIVIDUAL]

    def __getitem__(self, parcel_id: str) -> Prediction | NonIndividual:
        return self.assignments[parcel_id]

    def get(self, parcel_id: str):
        return self.assignments.get(parcel_id)


def impute_dataset(ds: Dataset, source: BisgSource | ExternalSource) -> ImputationResult:
    assignments: dict[str, Prediction | NonIndividual] = {}
    fallbacks: list[str] = []
    geo = None
    if isinstance(source, BisgSource):
        geo = source.geo or GeoPriorTable.from_demographics(ds.tracts.values())

    for p in ds.parcels:
        if p.owner_type is None:
            raise UnclassifiedParcel(f"parcel {p.parcel_id} has no owner type; classify entities first")
        if p.owner_type is not OwnerClass.INDIVIDUAL:
            assignments[p.parcel_id] = NON_INDIVIDUAL
            continue
        if isinstance(source, ExternalSource):
            dist = source.predictions.get(p.parcel_id)
            if dist is None:
                raise MissingPrediction(f"no prediction for individually-owned parcel {p.parcel_id}")
            assignments[p.parcel_id] = Prediction(dist, argmax_race(dist))
            continue
        try:
            surname = extract_surname(p.owner_name_raw, source.rules, source.convention).surname
        except UnparseableName:
            surname = ""
        try:
            dist = bisg_posterior(surname, p.geoid, source.priors, geo)  # type: ignore[arg-type]
            fallback = False
        except BothPriorsMissing:
            if not source.national_fallback:
                raise
            dist, fallback = source.priors.national, True
            fallbacks.append(p.parcel_id)
        assignments[p.parcel_id] = Prediction(dist, argmax_race(dist), fallback)

    if fallbacks:
        log.warning("%d parcel(s) fell back to the national prior", len(fallbacks))
    return ImputationResult(assignments, tuple(fallbacks))


def write_assignments(result: ImputationResult, stream: IO[str]) -> None:
    """Per-parcel output: probabilities and argmax race, or ``non_individual``."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["parcel_id", *PROB_COLUMNS, "race", "fallback"])
    for pid in sorted(result.assignments):
        a = result.assignments[pid]
        if isinstance(a, Prediction):
            w.writerow([pid, *(repr(p) for p in a.distribution.probs), a.race.label, int(a.fallback)])
        else:
            w.writerow([pid, *([""] * N_RACES), "non_individual", 0])
