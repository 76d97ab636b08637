"""Ground-truth validation metrics and error-rate stress adjustment.

Per-class metrics are computed with exact rational arithmetic on the integer
confusion counts and converted to float only at the end, so algebraic
identities (weighted recall == accuracy, fnr == 1 - recall) hold exactly.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .domain import N_RACES, RACES, RaceCategory
from .errors import EmptyInput, FnrOutOfRange, InsufficientData, MissingColumn

log = logging.getLogger(__name__)


class ConfusionMatrix:
    """5x5 counts; rows are true classes, columns predicted classes."""

    __slots__ = ("_counts",)

    def __init__(self, counts) -> None:
        arr = np.array(counts, dtype=np.int64)
        if arr.shape != (N_RACES, N_RACES):
            raise ValueError(f"confusion matrix must be {N_RACES}x{N_RACES}, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("confusion counts must be nonnegative")
        arr.setflags(write=False)
        self._counts = arr

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def total(self) -> int:
        return int(self._counts.sum())

    def __getitem__(self, key):
        return int(self._counts[key])

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self._counts + other._counts)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self._counts, other._counts)

    def __hash__(self) -> int:
        return hash(self._counts.tobytes())

    def __repr__(self) -> str:
        return f"ConfusionMatrix({self._counts.tolist()})"

    def transpose(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self._counts.T)

    def tolist(self) -> list[list[int]]:
        return self._counts.tolist()


def build_confusion(pairs: Iterable[tuple[RaceCategory, RaceCategory]]) -> ConfusionMatrix:
    counts = np.zeros((N_RACES, N_RACES), dtype=np.int64)
    n = 0
    for true, pred in pairs:
        counts[int(true), int(pred)] += 1
        n += 1
    if n == 0:
        raise EmptyInput("no (true, predicted) pairs")
    return ConfusionMatrix(counts)


def _require_total(cm: ConfusionMatrix) -> int:
    total = cm.total
    if total <= 0:
        raise EmptyInput("confusion matrix is empty")
    return total


def accuracy(cm: ConfusionMatrix) -> float:
    total = _require_total(cm)
    return int(np.trace(cm.counts)) / total


@dataclass(frozen=True)
class ClassMetrics:
    race: RaceCategory
    support: int
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float


def _exact_class_metrics(cm: ConfusionMatrix) -> list[dict]:
    total = _require_total(cm)
    c = cm.counts
    out = []
    for k in range(N_RACES):
        tp = int(c[k, k])
        support = int(c[k, :].sum())
        predicted = int(c[:, k].sum())
        fp = predicted - tp
        fn = support - tp
        tn = total - support - fp
        precision = Fraction(tp, predicted) if predicted else Fraction(0)
        recall = Fraction(tp, support) if support else Fraction(0)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else Fraction(0)
        fpr = Fraction(fp, fp + tn) if fp + tn else Fraction(0)
        out.append(dict(support=support, precision=precision, recall=recall, f1=f1, fpr=fpr, fnr=1 - recall))
    return out


def class_metrics(cm: ConfusionMatrix) -> dict[RaceCategory, ClassMetrics]:
    """One-vs-rest precision, recall, F1, FPR and FNR for every class.

    Undefined ratios (no predictions, no support, no negatives) are reported as 0.
    """
    return {
        r: ClassMetrics(r, m["support"], *(float(m[k]) for k in ("precision", "recall", "f1", "fpr", "fnr")))
        for r, m in zip(RACES, _exact_class_metrics(cm))
    }


@dataclass(frozen=True)
class WeightedMetrics:
    precision: float
    recall: float
    f1: float


def weighted_metrics(cm: ConfusionMatrix) -> WeightedMetrics:
    """Support-weighted averages of the per-class precision, recall and F1."""
    total = _require_total(cm)
    exact = _exact_class_metrics(cm)
    avg = {k: sum((m["support"] * m[k] for m in exact), Fraction(0)) / total for k in ("precision", "recall", "f1")}
    return WeightedMetrics(float(avg["precision"]), float(avg["recall"]), float(avg["f1"]))


# -- stress testing ----------------------------------------------------------------


@dataclass(frozen=True)
class StressParams:
    white_fpr: float
    fnr_by_race: Mapping[RaceCategory, float]

    def __post_init__(self) -> None:
        if not (0.0 <= self.white_fpr < 1.0):
            raise FnrOutOfRange(f"White FPR {self.white_fpr!r} outside [0, 1)")
        for race, fnr in self.fnr_by_race.items():
            if not (0.0 <= fnr < 1.0):
                raise FnrOutOfRange(f"{RaceCategory(race).label} FNR {fnr!r} outside [0, 1)")

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "StressParams":
        """Error rates recomputed from a validation confusion matrix."""
        m = class_metrics(cm)
        return cls(m[RaceCategory.WHITE].fpr, {r: m[r].fnr for r in RACES if r is not RaceCategory.WHITE and m[r].fnr < 1.0})

    def to_dict(self) -> dict:
        return {"white_fpr": self.white_fpr, "fnr": {RaceCategory(r).label: v for r, v in sorted(self.fnr_by_race.items())}}

    @classmethod
    def from_dict(cls, data: Mapping) -> "StressParams":
        return cls(float(data["white_fpr"]), {RaceCategory.parse(k): float(v) for k, v in dict(data.get("fnr", {})).items()})


# Validation error rates of the full (name + geography) and name-only models.
FULL_MODEL_STRESS = StressParams(0.069, {RaceCategory.BLACK: 0.0993, RaceCategory.HISPANIC: 0.1525})
NAME_ONLY_STRESS = StressParams(0.138, {RaceCategory.BLACK: 0.2062, RaceCategory.HISPANIC: 0.2771})
PRESET_STRESS = {"full": FULL_MODEL_STRESS, "name_only": NAME_ONLY_STRESS}


@dataclass(frozen=True)
class StressedShares:
    white: float
    minority: dict[RaceCategory, float]
    capped: tuple[RaceCategory, ...] = ()


def stress_adjust(
    white_share: float,
    minority_shares: Mapping[RaceCategory, float],
    params: StressParams,
    cap: bool = False,
) -> StressedShares:
    """Shrink White ownership by (1 - White FPR); inflate minorities by 1 / (1 - FNR).

    Results are not renormalised. With ``cap=True`` values above 1 are clipped
    and reported in ``capped``.
    """
    for name, s in [("white", white_share), *((RaceCategory(r).label, v) for r, v in minority_shares.items())]:
        if not (0.0 <= s <= 1.0):
            raise ValueError(f"{name} share {s!r} outside [0, 1]")
    stressed = {}
    capped = []
    for race, share in minority_shares.items():
        race = RaceCategory(race)
        fnr = params.fnr_by_race.get(race, 0.0)
        if not (0.0 <= fnr < 1.0):
            raise FnrOutOfRange(f"{race.label} FNR {fnr!r} outside [0, 1)")
        value = share / (1.0 - fnr)
        if value > 1.0:
            log.warning("stressed %s share %.4f exceeds 1", race.label, value)
            if cap:
                value = 1.0
                capped.append(race)
        stressed[race] = value
    return StressedShares(white_share * (1.0 - params.white_fpr), stressed, tuple(capped))


# -- accuracy by income decile --------------------------------------------------------


@dataclass(frozen=True)
class DecileAccuracy:
    decile: int  # 1 (lowest income) .. 10
    n: int
    accuracy: float | None
    income_min: float | None
    income_max: float | None


def decile_assignments(incomes: Sequence[float]) -> list[int]:
    """Zero-based decile per record from its income rank; tied incomes share the lower decile."""
    n = len(incomes)
    order = sorted(range(n), key=lambda i: incomes[i])
    out = [0] * n
    first_rank = 0
    for rank, i in enumerate(order):
        if rank == 0 or incomes[i] != incomes[order[rank - 1]]:
            first_rank = rank
        out[i] = first_rank * 10 // n
    return out


def accuracy_by_income_decile(records: Sequence[tuple[RaceCategory, RaceCategory, float]]) -> list[DecileAccuracy]:
    if len(records) < 10:
        raise InsufficientData(f"need at least 10 records for deciles, got {len(records)}")
    incomes = []
    for _, _, income in records:
        if income is None or math.isnan(income):
            raise InsufficientData("every record needs a tract median income")
        incomes.append(float(income))
    deciles = decile_assignments(incomes)
    buckets: list[list[int]] = [[] for _ in range(10)]
    for i, d in enumerate(deciles):
        buckets[d].append(i)
    out = []
    for d, members in enumerate(buckets):
        if not members:
            out.append(DecileAccuracy(d + 1, 0, None, None, None))
            continue
        correct = sum(1 for i in members if records[i][0] == records[i][1])
        inc = [incomes[i] for i in members]
        out.append(DecileAccuracy(d + 1, len(members), correct / len(members), min(inc), max(inc)))
    return out


# -- ground-truth files and report -----------------------------------------------------


@dataclass(frozen=True)
class GroundTruthRecord:
    record_id: str
    true_race: RaceCategory
    predicted_race: RaceCategory
    median_income: float | None = None


def read_ground_truth(stream: IO[str]) -> list[GroundTruthRecord]:
    """Read ``record_id,true_race,predicted_race[,median_income]``."""
    reader = csv.DictReader(stream)
    required = ("record_id", "true_race", "predicted_race")
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise MissingColumn(f"ground truth file missing column(s): {', '.join(missing)}")
    out = []
    for row in reader:
        income_raw = (row.get("median_income") or "").strip()
        try:
            out.append(
                GroundTruthRecord(
                    row["record_id"].strip(),
                    RaceCategory.parse(row["true_race"]),
                    RaceCategory.parse(row["predicted_race"]),
                    float(income_raw) if income_raw else None,
                )
            )
        except ValueError as exc:
            raise ValueError(f"line {reader.line_num}: {exc}") from None
    return out


def write_ground_truth(records: Iterable[GroundTruthRecord], stream: IO[str]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["record_id", "true_race", "predicted_race", "median_income"])
    for r in records:
        w.writerow([r.record_id, r.true_race.label, r.predicted_race.label, "" if r.median_income is None else repr(r.median_income)])


def metrics_report(records: Sequence[GroundTruthRecord]) -> dict:
    """Everything written to ``metrics.json``: matrix, per-class, weighted and decile metrics."""
    cm = build_confusion((r.true_race, r.predicted_race) for r in records)
    per_class = class_metrics(cm)
    weighted = weighted_metrics(cm)
    report = {
        "n_records": cm.total,
        "classes": [r.label for r in RACES],
        "confusion_matrix": cm.tolist(),
        "accuracy": accuracy(cm),
        "weighted": {"precision": weighted.precision, "recall": weighted.recall, "f1": weighted.f1},
        "per_class": {
            r.label: {
                "support": m.support,
                "precision": m.precision,
                "recall": m.recall,
                "f1": m.f1,
                "fpr": m.fpr,
                "fnr": m.fnr,
            }
            for r, m in per_class.items()
        },
        "stress_params": StressParams.from_confusion(cm).to_dict(),
        "income_deciles": None,
    }
    with_income = [r for r in records if r.median_income is not None]
    if len(with_income) == len(records) and len(records) >= 10:
        report["income_deciles"] = [
            {"decile": d.decile, "n": d.n, "accuracy": d.accuracy, "income_min": d.income_min, "income_max": d.income_max}
            for d in accuracy_by_income_decile([(r.true_race, r.predicted_race, r.median_income) for r in records])  # type: ignore[misc]
        ]
    return report
