"""Rule-based owner-type classification and surname extraction.

Owner names are matched against ordered keyword lists (government first, then
trust/estate/other, then corporate). Keywords match whole tokens or whole token
sequences after upper-casing and removing periods, so ``"Acme Holdings, L.L.C."``
and ``"ACME HOLDINGS LLC"`` classify the same way.
"""
from __future__ import annotations

import enum
import re
import sys
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .domain import OwnerClass
from .errors import EmptyName, NotAnIndividual, UnparseableName
from .ingest import ParcelRecord

_NON_TOKEN = re.compile(r"[^A-Z0-9'\-]+")
_CO_OWNER_SPLIT = re.compile(r"\s*&\s*|\s+AND\s+|\s*/\s*|\s*\+\s*")
_SURNAME_CHARS = re.compile(r"[^A-Z'\-]")
_GENERATIONAL = {"JR", "SR", "II", "III", "IV", "V", "ESQ", "MD", "PHD"}
_HONORIFICS = {"MR", "MRS", "MS", "MISS", "DR", "REV"}

RULE_KEYS = ("government", "trust_estate_other", "corporate")


class NameConvention(str, enum.Enum):
    LAST_FIRST = "last_first"  # NYS assessment-roll style: "SMITH JOHN A"
    FIRST_LAST = "first_last"


class Confidence(str, enum.Enum):
    FORMAT_MATCHED = "FormatMatched"
    HEURISTIC = "Heuristic"


@dataclass(frozen=True)
class SurnameExtraction:
    surname: str
    confidence: Confidence


def normalize_name(name: str) -> str:
    return name.upper().replace(".", "")


def tokenize(name: str) -> tuple[str, ...]:
    return tuple(t for t in _NON_TOKEN.split(normalize_name(name)) if t)


@dataclass(frozen=True)
class EntityRules:
    """Keyword phrases per non-individual class, stored pre-tokenised."""

    government: tuple[tuple[str, ...], ...] = ()
    trust_estate_other: tuple[tuple[str, ...], ...] = ()
    corporate: tuple[tuple[str, ...], ...] = ()

    @classmethod
    def from_lists(cls, lists: Mapping[str, Iterable[str]]) -> "EntityRules":
        unknown = set(lists) - set(RULE_KEYS)
        if unknown:
            raise ValueError(f"unknown rule key(s): {sorted(unknown)}")
        parsed = {}
        for key in RULE_KEYS:
            phrases = []
            for kw in lists.get(key, ()):
                toks = tokenize(kw)
                if toks and toks not in phrases:
                    phrases.append(toks)
            parsed[key] = tuple(phrases)
        return cls(**parsed)

    def ordered(self) -> Sequence[tuple[OwnerClass, tuple[tuple[str, ...], ...]]]:
        return (
            (OwnerClass.GOVERNMENT, self.government),
            (OwnerClass.TRUST_ESTATE_OTHER, self.trust_estate_other),
            (OwnerClass.CORPORATE, self.corporate),
        )

    def single_token_keywords(self) -> frozenset[str]:
        return frozenset(p[0] for _, phrases in self.ordered() for p in phrases if len(p) == 1)


def load_rules(source: str | Path | IO[bytes]) -> EntityRules:
    """Read a TOML keyword file with ``government``, ``trust_estate_other`` and ``corporate`` lists."""
    if hasattr(source, "read"):
        data = tomllib.load(source)  # type: ignore[arg-type]
    else:
        with open(source, "rb") as fh:
            data = tomllib.load(fh)
    for key, value in data.items():
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ValueError(f"rule {key!r} must be a list of strings")
    return EntityRules.from_lists(data)


_DEFAULT_RULES: EntityRules | None = None


def default_rules() -> EntityRules:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        with resources.files("tract_equity").joinpath("data/entity_rules.toml").open("rb") as fh:
            _DEFAULT_RULES = load_rules(fh)
    return _DEFAULT_RULES


def _contains(tokens: tuple[str, ...], phrase: tuple[str, ...]) -> bool:
    n = len(phrase)
    return any(tokens[i : i + n] == phrase for i in range(len(tokens) - n + 1))


def classify_owner(name_raw: str, rules: EntityRules | None = None) -> OwnerClass:
    if not name_raw or not name_raw.strip():
        raise EmptyName("owner name is empty")
    rules = default_rules() if rules is None else rules
    tokens = tokenize(name_raw)
    for owner_class, phrases in rules.ordered():
        if any(_contains(tokens, p) for p in phrases):
            return owner_class
    return OwnerClass.INDIVIDUAL


def _clean_surname(text: str) -> str:
    return _SURNAME_CHARS.sub("", text).strip("-'")


def extract_surname(
    name_raw: str,
    rules: EntityRules | None = None,
    convention: NameConvention | str = NameConvention.LAST_FIRST,
) -> SurnameExtraction:
    """Surname of the first listed owner of an individually-owned parcel.

    ``"SMITH, JOHN A"`` yields the part before the comma (``FormatMatched``).
    Without a comma the naming convention decides: the first token for
    ``last_first`` rolls, the last non-suffix token for ``first_last``.
    """
    if classify_owner(name_raw, rules) is not OwnerClass.INDIVIDUAL:
        raise NotAnIndividual(f"{name_raw!r} is not an individual owner")
    convention = NameConvention(convention)
    first_owner = _CO_OWNER_SPLIT.split(normalize_name(name_raw).strip())[0]

    if "," in first_owner:
        surname = _clean_surname(first_owner.split(",", 1)[0].replace(" ", ""))
        if surname and re.search("[A-Z]", surname):
            return SurnameExtraction(surname, Confidence.FORMAT_MATCHED)

    tokens = [t for t in (_clean_surname(tok) for tok in first_owner.replace(",", " ").split()) if re.search("[A-Z]", t)]
    if convention is NameConvention.LAST_FIRST:
        tokens = [t for t in tokens if t not in _HONORIFICS]
        candidates = tokens
    else:
        candidates = [t for t in tokens if t not in _GENERATIONAL and t not in _HONORIFICS]
        candidates.reverse()
    if not candidates:
        raise UnparseableName(f"no alphabetic token in {name_raw!r}")
    return SurnameExtraction(candidates[0], Confidence.HEURISTIC)


def classify_parcels(parcels: Iterable[ParcelRecord], rules: EntityRules | None = None) -> list[ParcelRecord]:
    rules = default_rules() if rules is None else rules
    return [replace(p, owner_type=classify_owner(p.owner_name_raw, rules)) for p in parcels]
