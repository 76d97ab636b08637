"""Shared enumerations and small value types used across the pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from .errors import InvalidDistribution, MalformedGeoId

N_RACES = 5


class RaceCategory(IntEnum):
    """The five race/ethnicity categories, in canonical order (index 0-4)."""

    WHITE = 0
    BLACK = 1
    HISPANIC = 2
    ASIAN = 3
    OTHER = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, raw: str) -> "RaceCategory":
        key = raw.strip().lower()
        try:
            return _RACE_ALIASES[key]
        except KeyError:
            raise ValueError(f"unknown race label {raw!r}") from None


RACES: tuple[RaceCategory, ...] = tuple(RaceCategory)
MINORITY_GROUPS = (RaceCategory.BLACK, RaceCategory.HISPANIC, RaceCategory.ASIAN)

# Column-style labels plus class names common in validation files (white5, afrAmer5, ...).
_RACE_ALIASES = {r.label: r for r in RaceCategory}
_RACE_ALIASES.update(
    {
        "white5": RaceCategory.WHITE,
        "afrAmer5".lower(): RaceCategory.BLACK,
        "hisp5": RaceCategory.HISPANIC,
        "asian5": RaceCategory.ASIAN,
        "other5": RaceCategory.OTHER,
        "nh_white": RaceCategory.WHITE,
        "nh_black": RaceCategory.BLACK,
        "nh_asian": RaceCategory.ASIAN,
        "latino": RaceCategory.HISPANIC,
    }
)


class OwnerClass(IntEnum):
    """Owner-type code. 1 is an individual; 2, 3 and 4 are non-individual."""

    INDIVIDUAL = 1
    CORPORATE = 2
    GOVERNMENT = 3
    TRUST_ESTATE_OTHER = 4

    @property
    def is_individual(self) -> bool:
        return self is OwnerClass.INDIVIDUAL


class GeoId(str):
    """11-digit census tract identifier: state(2) + county(3) + tract(6)."""

    __slots__ = ()

    def __new__(cls, raw: str) -> "GeoId":
        value = str(raw).strip()
        if len(value) != 11:
            raise MalformedGeoId(f"GEOID {raw!r} must have 11 digits, got {len(value)} characters")
        if not (value.isascii() and value.isdigit()):
            raise MalformedGeoId(f"GEOID {raw!r} contains non-digit characters")
        if value[:2] == "00":
            raise MalformedGeoId(f"GEOID {raw!r} has a zero state prefix")
        return super().__new__(cls, value)

    @property
    def state(self) -> str:
        return self[:2]

    @property
    def county(self) -> str:
        return self[2:5]

    @property
    def tract(self) -> str:
        return self[5:]

    def __repr__(self) -> str:
        return f"GeoId({str(self)})"


def validate_geoid(raw: str) -> GeoId:
    return GeoId(raw)


@dataclass(frozen=True)
class RaceDistribution:
    """Probability vector over the five categories, indexed by ``RaceCategory``."""

    probs: tuple[float, ...]

    SUM_TOL = 1e-9

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) != N_RACES:
            raise InvalidDistribution(f"expected {N_RACES} probabilities, got {len(probs)}")
        for p in probs:
            if not (0.0 <= p <= 1.0):  # also rejects NaN
                raise InvalidDistribution(f"probability {p!r} outside [0, 1]")
        total = math.fsum(probs)
        if abs(total - 1.0) > self.SUM_TOL:
            raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_weights(cls, weights: Iterable[float]) -> "RaceDistribution":
        """Normalise nonnegative weights into a distribution."""
        w = [float(x) for x in weights]
        if any(not (x >= 0.0) or math.isinf(x) for x in w):
            raise InvalidDistribution(f"weights must be finite and nonnegative: {w}")
        total = math.fsum(w)
        if total <= 0.0:
            raise InvalidDistribution("weights sum to zero")
        return cls(tuple(x / total for x in w))

    @classmethod
    def uniform(cls) -> "RaceDistribution":
        return cls((1.0 / N_RACES,) * N_RACES)

    @classmethod
    def point_mass(cls, race: RaceCategory) -> "RaceDistribution":
        return cls(tuple(1.0 if r == race else 0.0 for r in RACES))

    def __getitem__(self, race: RaceCategory) -> float:
        return self.probs[int(race)]

    def __iter__(self):
        return iter(self.probs)


def argmax_race(dist: RaceDistribution | Sequence[float]) -> RaceCategory:
    """Category with the largest probability; ties go to the earliest category."""
    probs = dist.probs if isinstance(dist, RaceDistribution) else tuple(dist)
    best = 0
    for i in range(1, len(probs)):
        if probs[i] > probs[best]:
            best = i
    return RaceCategory(best)
