"""Seeded synthetic parcel/tract data with planted ground truth.

Each tract gets a resident race mix (Dirichlet with a floor) and an owner
race mix obtained by tilting the resident mix, so the generated data has a
known disparity. Owner names are built from race-labelled surname pools and
entity-name templates; the matching surname prior table is emitted alongside.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import N_RACES, RACES, GeoId, OwnerClass, RaceCategory, RaceDistribution
from .entities import classify_owner, extract_surname
from .errors import InvalidSpec
from .imputation import SurnamePriorTable, write_predictions, write_surname_priors
from .ingest import ParcelRecord, TractDemographics, write_demographics, write_parcels

SURNAME_POOLS: dict[RaceCategory, tuple[str, ...]] = {
    RaceCategory.WHITE: (
        "MILLER", "MURPHY", "OLSEN", "SCHMIDT", "KOWALSKI", "SULLIVAN", "MUELLER", "BAKER",
        "HANSEN", "FISCHER", "O'BRIEN", "MCCARTHY", "NOWAK", "WAGNER", "BECKER",
    ),
    RaceCategory.BLACK: (
        "WASHINGTON", "JEFFERSON", "BOOKER", "MOSLEY", "DORSEY", "GAINES", "OKAFOR", "MENSAH",
        "ADEYEMI", "TOUSSAINT", "BANKS", "MAYFIELD",
    ),
    RaceCategory.HISPANIC: (
        "GARCIA", "RODRIGUEZ", "MARTINEZ", "HERNANDEZ", "LOPEZ", "GONZALEZ", "PEREZ", "SANCHEZ",
        "RAMIREZ", "TORRES", "FLORES", "RIVERA", "GARCIA-LOPEZ",
    ),
    RaceCategory.ASIAN: (
        "NGUYEN", "KIM", "PARK", "CHEN", "WANG", "LI", "ZHANG", "LIU", "PATEL", "TRAN", "HUANG", "CHOI",
    ),
    RaceCategory.OTHER: ("BEGAY", "YAZZIE", "TSOSIE", "BENALLY", "NAKAI", "ATCITTY", "CHEE"),
}
FIRST_NAMES = (
    "JOHN", "MARY", "JAMES", "MARIA", "WEI", "ANH", "DARNELL", "AISHA",
    "ROBERT", "LINDA", "JOSE", "ANA", "MIN", "KEISHA", "DAVID", "SARAH",
)
_ENTITY_WORDS = ("ACME", "SUMMIT", "HARBOR", "EMPIRE", "BEACON", "MAPLE", "RIVERSIDE", "KEYSTONE", "GRANITE", "UNION")
_CORP_SUFFIXES = ("LLC", "INC", "CORP", "REALTY LLC", "HOLDINGS LLC", "PROPERTIES INC", "LP")
_COUNTIES = ("001", "005", "029", "047", "055", "061", "067")
_OWNER_CLASS_MIX = ((OwnerClass.CORPORATE, 0.7), (OwnerClass.GOVERNMENT, 0.1), (OwnerClass.TRUST_ESTATE_OTHER, 0.2))


@dataclass(frozen=True)
class SyntheticSpec:
    n_tracts: int = 50
    parcels_min: int = 150
    parcels_max: int = 250
    corporate_share_range: tuple[float, float] = (0.0, 0.3)
    mix_alpha: tuple[float, ...] = (2.0, 1.0, 1.0, 0.8, 0.3)  # Dirichlet for the resident mix
    mix_floor: float = 0.03  # minimum resident share per category
    owner_tilt: tuple[float, ...] = (1.6, 0.6, 0.6, 1.1, 1.0)  # owner mix = normalise(resident mix * tilt)
    surname_purity: float = 0.95  # P(home race | surname) written to the prior table
    surname_crossover: float = 0.03  # chance an owner's surname comes from another group's pool
    urban_fraction: float = 0.8
    comma_format_rate: float = 0.2
    co_owner_rate: float = 0.2
    state: str = "36"

    def validate(self) -> None:
        problems = []
        if self.n_tracts < 1:
            problems.append("n_tracts must be >= 1")
        if not (1 <= self.parcels_min <= self.parcels_max):
            problems.append("need 1 <= parcels_min <= parcels_max")
        lo, hi = self.corporate_share_range
        if not (0.0 <= lo <= hi <= 1.0):
            problems.append("corporate_share_range must satisfy 0 <= lo <= hi <= 1")
        if len(self.mix_alpha) != N_RACES or min(self.mix_alpha) <= 0:
            problems.append("mix_alpha needs five positive entries")
        if len(self.owner_tilt) != N_RACES or min(self.owner_tilt) <= 0:
            problems.append("owner_tilt needs five positive entries")
        if not (0.0 <= self.mix_floor < 1.0 / N_RACES):
            problems.append("mix_floor must be in [0, 0.2)")
        if not (1.0 / N_RACES < self.surname_purity < 1.0):
            problems.append("surname_purity must be in (0.2, 1)")
        for name in ("urban_fraction", "comma_format_rate", "co_owner_rate", "surname_crossover"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                problems.append(f"{name} must be in [0, 1]")
        if len(self.state) != 2 or not self.state.isdigit() or self.state == "00":
            problems.append("state must be a nonzero 2-digit FIPS code")
        if problems:
            raise InvalidSpec("; ".join(problems))


@dataclass(frozen=True)
class PlantedTract:
    geoid: GeoId
    pop_mix: tuple[float, ...]
    owner_mix: tuple[float, ...]  # generating probabilities
    n_individual: int
    owner_counts: tuple[int, ...]  # realised true-race counts among individual owners
    n_corporate_like: int

    @property
    def owner_shares(self) -> tuple[float, ...] | None:
        if self.n_individual == 0:
            return None
        return tuple(c / self.n_individual for c in self.owner_counts)

    @property
    def corporate_share(self) -> float:
        return self.n_corporate_like / (self.n_individual + self.n_corporate_like)


@dataclass(frozen=True)
class Label:
    parcel_id: str
    geoid: GeoId
    owner_class: OwnerClass
    true_race: RaceCategory | None


@dataclass(frozen=True)
class SyntheticData:
    parcels: list[ParcelRecord]
    tracts: list[TractDemographics]
    labels: dict[str, Label]
    planted: list[PlantedTract]
    priors: SurnamePriorTable
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)

    def perfect_predictions(self) -> dict[str, RaceDistribution]:
        return {
            pid: RaceDistribution.point_mass(lab.true_race)
            for pid, lab in self.labels.items()
            if lab.true_race is not None
        }


def build_prior_table(spec: SyntheticSpec, national: RaceDistribution) -> SurnamePriorTable:
    rest = (1.0 - spec.surname_purity) / (N_RACES - 1)
    table = {}
    for race, pool in SURNAME_POOLS.items():
        probs = [rest] * N_RACES
        probs[race] = spec.surname_purity
        for name in pool:
            table[name] = RaceDistribution.from_weights(probs)
    return SurnamePriorTable(table, national)


def _check_pools() -> None:
    # every generated individual name must classify as Individual and give back its surname
    for race, pool in SURNAME_POOLS.items():
        for surname in pool:
            name = f"{surname} {FIRST_NAMES[0]}"
            if classify_owner(name) is not OwnerClass.INDIVIDUAL or extract_surname(name).surname != surname:
                raise InvalidSpec(f"surname {surname!r} collides with an entity keyword or parses badly")


def _individual_name(rng: np.random.Generator, surname: str, spec: SyntheticSpec) -> str:
    first = FIRST_NAMES[rng.integers(len(FIRST_NAMES))]
    if rng.random() < spec.comma_format_rate:
        name = f"{surname}, {first} {chr(ord('A') + int(rng.integers(26)))}"
    else:
        name = f"{surname} {first}"
    if rng.random() < spec.co_owner_rate:
        name += f" & {FIRST_NAMES[rng.integers(len(FIRST_NAMES))]}"
    return name


def _entity_name(rng: np.random.Generator, owner_class: OwnerClass) -> str:
    word = _ENTITY_WORDS[rng.integers(len(_ENTITY_WORDS))]
    if owner_class is OwnerClass.CORPORATE:
        return f"{word} {_CORP_SUFFIXES[rng.integers(len(_CORP_SUFFIXES))]}"
    if owner_class is OwnerClass.GOVERNMENT:
        return f"CITY OF {word}" if rng.random() < 0.5 else f"{word} HOUSING AUTHORITY"
    surname = SURNAME_POOLS[RaceCategory.WHITE][rng.integers(len(SURNAME_POOLS[RaceCategory.WHITE]))]
    return f"{surname} FAMILY TRUST" if rng.random() < 0.7 else f"{word} CHURCH"


def generate_synthetic(spec: SyntheticSpec | None = None, seed: int = 0) -> SyntheticData:
    spec = spec or SyntheticSpec()
    spec.validate()
    if not (0 <= seed < 2**64):
        raise InvalidSpec("seed must be a 64-bit unsigned integer")
    _check_pools()
    rng = np.random.default_rng(seed)

    alpha = np.asarray(spec.mix_alpha, dtype=float)
    tilt = np.asarray(spec.owner_tilt, dtype=float)
    classes = [c for c, _ in _OWNER_CLASS_MIX]
    class_p = np.array([p for _, p in _OWNER_CLASS_MIX])

    parcels: list[ParcelRecord] = []
    tracts: list[TractDemographics] = []
    labels: dict[str, Label] = {}
    planted: list[PlantedTract] = []
    pop_weighted = np.zeros(N_RACES)

    for t in range(spec.n_tracts):
        county = _COUNTIES[t % len(_COUNTIES)]
        geoid = GeoId(f"{spec.state}{county}{(t + 1) * 100:06d}")
        pop_mix = spec.mix_floor + (1.0 - N_RACES * spec.mix_floor) * rng.dirichlet(alpha)
        pop_mix = pop_mix / pop_mix.sum()
        owner_mix = pop_mix * tilt
        owner_mix = owner_mix / owner_mix.sum()
        population = int(rng.integers(1500, 8001))
        pop_weighted += population * pop_mix
        income = float(round(math.exp(rng.normal(math.log(70_000), 0.45)), -2))
        urban = bool(rng.random() < spec.urban_fraction)
        tracts.append(TractDemographics(geoid, population, tuple(float(s) for s in pop_mix), income, urban))

        n_parcels = int(rng.integers(spec.parcels_min, spec.parcels_max + 1))
        corp_rate = float(rng.uniform(*spec.corporate_share_range))
        counts = [0] * N_RACES
        n_ind = n_corp = 0
        for j in range(n_parcels):
            pid = f"{geoid}-{j + 1:04d}"
            value = float(round(math.exp(rng.normal(math.log(250_000), 0.6)), -2))
            if rng.random() < corp_rate:
                owner_class = classes[int(rng.choice(len(classes), p=class_p))]
                name = _entity_name(rng, owner_class)
                race = None
                n_corp += 1
            else:
                owner_class = OwnerClass.INDIVIDUAL
                race = RaceCategory(int(rng.choice(N_RACES, p=owner_mix)))
                pool_race = race
                if rng.random() < spec.surname_crossover:
                    others = [r for r in RACES if r is not race]
                    pool_race = others[int(rng.integers(len(others)))]
                pool = SURNAME_POOLS[pool_race]
                name = _individual_name(rng, pool[rng.integers(len(pool))], spec)
                counts[race] += 1
                n_ind += 1
            parcels.append(ParcelRecord(pid, geoid, value, name))
            labels[pid] = Label(pid, geoid, owner_class, race)
        planted.append(
            PlantedTract(geoid, tuple(float(s) for s in pop_mix), tuple(float(s) for s in owner_mix), n_ind, tuple(counts), n_corp)
        )

    national = RaceDistribution.from_weights(pop_weighted)
    return SyntheticData(parcels, tracts, labels, planted, build_prior_table(spec, national), spec)


def write_synthetic(data: SyntheticData, out_dir: str | Path) -> dict[str, Path]:
    """Write the dataset and its ground truth; returns the paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "parcels": out / "parcels.csv",
        "tracts": out / "tracts.csv",
        "priors": out / "surname_priors.csv",
        "labels": out / "labels.csv",
        "planted": out / "planted.csv",
        "predictions_perfect": out / "predictions_perfect.csv",
    }
    with open(paths["parcels"], "w", newline="", encoding="utf-8") as fh:
        write_parcels(data.parcels, fh)
    with open(paths["tracts"], "w", newline="", encoding="utf-8") as fh:
        write_demographics(data.tracts, fh)
    with open(paths["priors"], "w", newline="", encoding="utf-8") as fh:
        write_surname_priors(data.priors, fh)
    with open(paths["predictions_perfect"], "w", newline="", encoding="utf-8") as fh:
        write_predictions(data.perfect_predictions(), fh)
    with open(paths["labels"], "w", newline="", encoding="utf-8") as fh:
        write_labels(data.labels.values(), fh)
    with open(paths["planted"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["geoid", *(f"pop_{r.label}" for r in RACES), *(f"owner_p_{r.label}" for r in RACES),
             "n_individual", *(f"owners_{r.label}" for r in RACES), "n_corporate_like"]
        )
        for p in data.planted:
            w.writerow([p.geoid, *map(repr, p.pop_mix), *map(repr, p.owner_mix), p.n_individual, *p.owner_counts, p.n_corporate_like])
    return paths


def write_labels(labels, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["parcel_id", "geoid", "owner_class", "true_race"])
    for lab in labels:
        w.writerow([lab.parcel_id, lab.geoid, int(lab.owner_class), "" if lab.true_race is None else lab.true_race.label])


def read_labels(stream) -> dict[str, Label]:
    out = {}
    for row in csv.DictReader(stream):
        race = row["true_race"].strip()
        out[row["parcel_id"]] = Label(
            row["parcel_id"], GeoId(row["geoid"]), OwnerClass(int(row["owner_class"])), RaceCategory.parse(race) if race else None
        )
    return out
