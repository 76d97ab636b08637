"""Tract-level ownership profiles and the statistics derived from them.

Shares come in two denominators and the distinction matters throughout:
``indiv_share_by_race`` is a fraction of *individually-owned* properties,
while ``race_share_of_all`` / ``combined_white_corp`` are fractions of *all*
properties in the tract (entity-owned ones included).
"""
from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import MINORITY_GROUPS, N_RACES, RACES, GeoId, OwnerClass, RaceCategory
from .errors import (
    GeoidMismatch,
    MissingPrediction,
    MixedGeoids,
    NoIndividualOwners,
    UnclassifiedParcel,
    ZeroTotalValue,
)
from .imputation import ImputationResult, Prediction
from .ingest import Dataset, ParcelRecord, TractDemographics

DEFAULT_WHITE_POP_MAX = 0.5
DEFAULT_WHITE_OWNER_MIN = 0.40


@dataclass(frozen=True)
class TractOwnershipProfile:
    geoid: GeoId
    n_properties: int
    n_individual: int
    n_corporate_like: int
    owner_count_by_race: tuple[int, ...]
    owner_value_by_race: tuple[float, ...]
    corporate_value: float
    value_total: float

    def __post_init__(self) -> None:
        if self.n_individual + self.n_corporate_like != self.n_properties:
            raise ValueError("individual + corporate-like counts must equal n_properties")
        if sum(self.owner_count_by_race) != self.n_individual:
            raise ValueError("race counts must sum to n_individual")
        if self.n_properties <= 0:
            raise ValueError("a profile needs at least one property")

    @property
    def corporate_share(self) -> float:
        return self.n_corporate_like / self.n_properties

    @property
    def indiv_share_by_race(self) -> tuple[float, ...] | None:
        """Race shares of individually-owned properties; None when there are none."""
        if self.n_individual == 0:
            return None
        return tuple(c / self.n_individual for c in self.owner_count_by_race)

    def indiv_share(self, race: RaceCategory) -> float | None:
        shares = self.indiv_share_by_race
        return None if shares is None else shares[int(race)]


# -- aggregation -------------------------------------------------------------


def aggregate_tract(parcels: Iterable[tuple[ParcelRecord, Prediction | object | None]]) -> TractOwnershipProfile:
    """Fold (parcel, prediction) pairs of one tract into a profile (counts by argmax race)."""
    geoid = None
    n = n_ind = n_corp = 0
    counts = [0] * N_RACES
    values = [0.0] * N_RACES
    corp_value = 0.0
    for parcel, pred in parcels:
        if geoid is None:
            geoid = parcel.geoid
        elif parcel.geoid != geoid:
            raise MixedGeoids(f"parcels from {geoid} and {parcel.geoid} in one aggregation")
        n += 1
        if parcel.owner_type is None:
            raise UnclassifiedParcel(f"parcel {parcel.parcel_id} has no owner type")
        if parcel.owner_type is OwnerClass.INDIVIDUAL:
            if not isinstance(pred, Prediction):
                raise MissingPrediction(f"individually-owned parcel {parcel.parcel_id} has no race prediction")
            n_ind += 1
            counts[pred.race] += 1
            values[pred.race] += parcel.assessed_value
        else:
            n_corp += 1
            corp_value += parcel.assessed_value
    if geoid is None:
        raise ValueError("cannot aggregate an empty tract")
    value_total = math.fsum(values) + corp_value
    return TractOwnershipProfile(geoid, n, n_ind, n_corp, tuple(counts), tuple(values), corp_value, value_total)


def aggregate_dataset(ds: Dataset, imputation: ImputationResult) -> list[TractOwnershipProfile]:
    """One profile per tract that has parcels, ordered by GEOID."""
    profiles = []
    for geoid, parcels in ds.parcels_by_tract().items():
        profiles.append(aggregate_tract((p, imputation.get(p.parcel_id)) for p in parcels))
    return profiles


# -- disparity ---------------------------------------------------------------


@dataclass(frozen=True)
class DisparityRecord:
    geoid: GeoId
    race: RaceCategory
    pop_share: float
    owner_share: float
    weight: int

    @property
    def disparity(self) -> float:
        return self.owner_share - self.pop_share


def disparity(profile: TractOwnershipProfile, demo: TractDemographics) -> list[DisparityRecord]:
    """Owner share minus population share for each of the five categories."""
    if profile.geoid != demo.geoid:
        raise GeoidMismatch(f"profile {profile.geoid} joined to demographics {demo.geoid}")
    shares = profile.indiv_share_by_race
    if shares is None:
        raise NoIndividualOwners(f"tract {profile.geoid} has no individually-owned properties")
    return [DisparityRecord(profile.geoid, r, demo.pop_share[r], shares[r], demo.total_population) for r in RACES]


# -- majority / dominant groups ------------------------------------------------


class MajorityGroup(str, enum.Enum):
    WHITE = "White"
    BLACK = "Black"
    HISPANIC = "Hispanic"
    ASIAN = "Asian"
    MIXED = "Mixed"


class MajorityMode(str, enum.Enum):
    STRICT = "strict"  # group must exceed half the population
    PLURALITY = "plurality"  # largest of the four named groups


_GROUP_OF = {
    RaceCategory.WHITE: MajorityGroup.WHITE,
    RaceCategory.BLACK: MajorityGroup.BLACK,
    RaceCategory.HISPANIC: MajorityGroup.HISPANIC,
    RaceCategory.ASIAN: MajorityGroup.ASIAN,
}


def classify_majority(demo: TractDemographics) -> MajorityGroup:
    for race, group in _GROUP_OF.items():
        if demo.pop_share[race] > 0.5:
            return group
    return MajorityGroup.MIXED


def classify_dominant(demo: TractDemographics) -> MajorityGroup:
    """Plurality group; Mixed when Other is largest or the top share is tied."""
    shares = demo.pop_share
    top = max(shares)
    leaders = [r for r in RACES if shares[r] == top]
    if len(leaders) != 1 or leaders[0] is RaceCategory.OTHER:
        return MajorityGroup.MIXED
    return _GROUP_OF[leaders[0]]


def group_of(demo: TractDemographics, mode: MajorityMode | str = MajorityMode.STRICT) -> MajorityGroup:
    return classify_majority(demo) if MajorityMode(mode) is MajorityMode.STRICT else classify_dominant(demo)


@dataclass(frozen=True)
class MajorityProfileRow:
    group: MajorityGroup
    n_tracts: int
    pop_mean: tuple[float, ...] | None
    owner_mean: tuple[float, ...] | None  # over member tracts with individual owners
    n_owner_tracts: int


def _mean(rows: Sequence[Sequence[float]], weights: Sequence[float] | None) -> tuple[float, ...] | None:
    if not rows:
        return None
    arr = np.asarray(rows, dtype=float)
    if weights is None:
        return tuple(float(v) for v in arr.mean(axis=0))
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        return None
    return tuple(float(v) for v in (w[:, None] * arr).sum(axis=0) / w.sum())


def majority_profile_table(
    tracts: Sequence[tuple[TractOwnershipProfile, TractDemographics]],
    mode: MajorityMode | str = MajorityMode.STRICT,
    population_weighted: bool = False,
) -> list[MajorityProfileRow]:
    """Mean population and owner composition per majority group (unweighted by default)."""
    if not tracts:
        raise ValueError("majority_profile_table needs at least one tract")
    members: dict[MajorityGroup, list[tuple[TractOwnershipProfile, TractDemographics]]] = defaultdict(list)
    for profile, demo in tracts:
        members[group_of(demo, mode)].append((profile, demo))
    rows = []
    for group in MajorityGroup:
        pairs = members.get(group, [])
        with_owners = [(p, d) for p, d in pairs if p.n_individual > 0]
        pop_w = [d.total_population for _, d in pairs] if population_weighted else None
        own_w = [d.total_population for _, d in with_owners] if population_weighted else None
        rows.append(
            MajorityProfileRow(
                group,
                len(pairs),
                _mean([d.pop_share for _, d in pairs], pop_w),
                _mean([p.indiv_share_by_race for p, _ in with_owners], own_w),  # type: ignore[misc]
                len(with_owners),
            )
        )
    return rows


# -- shares of all properties ------------------------------------------------


def share_of_all(corporate_share: float, indiv_share: float) -> float:
    """Rescale a share of individually-owned properties to a share of all properties."""
    return (1.0 - corporate_share) * indiv_share


def combine_white_corp(corporate_share: float, white_indiv_share: float) -> float:
    return corporate_share + (1.0 - corporate_share) * white_indiv_share


def race_share_of_all(profile: TractOwnershipProfile, race: RaceCategory) -> float:
    share = profile.indiv_share(race)
    return 0.0 if share is None else share_of_all(profile.corporate_share, share)


def combined_white_corp(profile: TractOwnershipProfile) -> float:
    share = profile.indiv_share(RaceCategory.WHITE)
    return 1.0 if share is None else combine_white_corp(profile.corporate_share, share)


@dataclass(frozen=True)
class CorporateOwnershipRow:
    group: MajorityGroup
    n_tracts: int
    white_owner: float | None  # mean White individual share of ALL properties
    corporate: float | None
    white_plus_corp: float | None


def corporate_ownership_table(
    tracts: Sequence[tuple[TractOwnershipProfile, TractDemographics]],
    mode: MajorityMode | str = MajorityMode.PLURALITY,
) -> list[CorporateOwnershipRow]:
    """Mean White, corporate and combined shares (of all properties) per dominant group."""
    members: dict[MajorityGroup, list[TractOwnershipProfile]] = defaultdict(list)
    for profile, demo in tracts:
        members[group_of(demo, mode)].append(profile)
    rows = []
    for group in MajorityGroup:
        ps = members.get(group, [])
        if not ps:
            rows.append(CorporateOwnershipRow(group, 0, None, None, None))
            continue
        rows.append(
            CorporateOwnershipRow(
                group,
                len(ps),
                float(np.mean([race_share_of_all(p, RaceCategory.WHITE) for p in ps])),
                float(np.mean([p.corporate_share for p in ps])),
                float(np.mean([combined_white_corp(p) for p in ps])),
            )
        )
    return rows


# -- extreme disparity ---------------------------------------------------------


class OwnershipMeasure(str, enum.Enum):
    INDIVIDUAL_ONLY = "individual"  # White share of individually-owned properties
    COMBINED_WITH_CORP = "combined"  # White individual + corporate share of all properties


@dataclass(frozen=True)
class ExtremeTract:
    geoid: GeoId
    white_pop: float
    white_owner: float
    minority: RaceCategory
    minority_pop: float
    minority_owner: float
    corporate_share: float

    @property
    def gap(self) -> float:
        return self.white_owner - self.white_pop


def largest_minority(demo: TractDemographics) -> RaceCategory:
    return max(MINORITY_GROUPS, key=lambda r: (demo.pop_share[r], -int(r)))


def find_extreme_disparity(
    tracts: Iterable[tuple[TractOwnershipProfile, TractDemographics]],
    white_pop_max: float = DEFAULT_WHITE_POP_MAX,
    white_owner_min: float = DEFAULT_WHITE_OWNER_MIN,
    mode: OwnershipMeasure | str = OwnershipMeasure.INDIVIDUAL_ONLY,
) -> list[ExtremeTract]:
    """Tracts under ``white_pop_max`` White residents whose White ownership reaches ``white_owner_min``.

    Ranked by ownership-minus-population gap, largest first.
    """
    mode = OwnershipMeasure(mode)
    found = []
    for profile, demo in tracts:
        if profile.geoid != demo.geoid:
            raise GeoidMismatch(f"profile {profile.geoid} joined to demographics {demo.geoid}")
        white_pop = demo.pop_share[RaceCategory.WHITE]
        if not white_pop < white_pop_max:
            continue
        minority = largest_minority(demo)
        if mode is OwnershipMeasure.INDIVIDUAL_ONLY:
            if profile.n_individual == 0:
                continue
            white_owner = profile.indiv_share(RaceCategory.WHITE)
            minority_owner = profile.indiv_share(minority)
        else:
            white_owner = combined_white_corp(profile)
            minority_owner = race_share_of_all(profile, minority)
        if white_owner >= white_owner_min:  # type: ignore[operator]
            found.append(
                ExtremeTract(
                    profile.geoid, white_pop, white_owner, minority,  # type: ignore[arg-type]
                    demo.pop_share[minority], minority_owner, profile.corporate_share,  # type: ignore[arg-type]
                )
            )
    found.sort(key=lambda t: (-t.gap, t.geoid))
    return found


# -- urbanisation ---------------------------------------------------------------


class UrbanClass(str, enum.Enum):
    URBAN_CORE = "Urban-Core"
    SUBURBAN_URBAN = "Suburban-Urban"
    RURAL = "Rural"


def property_count_threshold(profiles: Iterable[TractOwnershipProfile], quantile: float = 0.75) -> float:
    counts = [p.n_properties for p in profiles]
    if not counts:
        raise ValueError("no profiles")
    return float(np.quantile(counts, quantile))


def classify_urbanization(profile: TractOwnershipProfile, demo: TractDemographics, quartile_threshold: float) -> UrbanClass:
    if not demo.census_urban:
        return UrbanClass.RURAL
    if profile.n_properties >= quartile_threshold:
        return UrbanClass.URBAN_CORE
    return UrbanClass.SUBURBAN_URBAN


@dataclass(frozen=True)
class UrbanizationRow:
    urban_class: UrbanClass
    n_tracts: int
    mean_white_gap: float | None  # White owner share minus White population share
    mean_corporate_share: float | None


def urbanization_table(
    tracts: Sequence[tuple[TractOwnershipProfile, TractDemographics]],
    quartile_threshold: float | None = None,
) -> tuple[float | None, list[tuple[GeoId, UrbanClass]], list[UrbanizationRow]]:
    if not tracts:
        return None, [], [UrbanizationRow(c, 0, None, None) for c in UrbanClass]
    if quartile_threshold is None:
        quartile_threshold = property_count_threshold(p for p, _ in tracts)
    labels = [(p.geoid, classify_urbanization(p, d, quartile_threshold)) for p, d in tracts]
    rows = []
    for cls in UrbanClass:
        members = [(p, d) for (p, d), (_, c) in zip(tracts, labels) if c is cls]
        gaps = [p.indiv_share(RaceCategory.WHITE) - d.pop_share[RaceCategory.WHITE] for p, d in members if p.n_individual]
        rows.append(
            UrbanizationRow(
                cls,
                len(members),
                float(np.mean(gaps)) if gaps else None,
                float(np.mean([p.corporate_share for p, _ in members])) if members else None,
            )
        )
    return quartile_threshold, labels, rows


# -- value shares -----------------------------------------------------------------


def value_share_by_race(profiles: Iterable[TractOwnershipProfile]) -> tuple[float, ...]:
    """Share of total individually-owned assessed value held by each race."""
    totals = [0.0] * N_RACES
    seen = False
    for p in profiles:
        seen = True
        for r in RACES:
            totals[r] += p.owner_value_by_race[r]
    if not seen:
        raise ValueError("value_share_by_race needs at least one profile")
    grand = math.fsum(totals)
    if grand <= 0.0:
        raise ZeroTotalValue("individually-owned assessed value sums to zero")
    return tuple(t / grand for t in totals)


def join(profiles: Iterable[TractOwnershipProfile], tracts: Mapping[GeoId, TractDemographics]):
    return [(p, tracts[p.geoid]) for p in profiles]
