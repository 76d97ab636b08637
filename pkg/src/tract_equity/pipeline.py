"""End-to-end run: ingest -> classify -> impute -> analyse -> report.

``run_pipeline`` writes a self-describing output bundle. Identical inputs and
configuration give byte-identical files: every table is sorted, floats are
formatted with fixed precision and the manifest carries no timestamps or
absolute paths.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import analytics as an
from .domain import RACES, RaceCategory
from .entities import EntityRules, NameConvention, classify_parcels, default_rules, load_rules
from .errors import (
    BothPriorsMissing,
    ConfigError,
    InvalidDistribution,
    MissingColumn,
    MissingPrediction,
    TooFewPoints,
    TractEquityError,
    UnclassifiedParcel,
    ZeroTotalValue,
)
from .evaluation import (
    PRESET_STRESS,
    GroundTruthRecord,
    StressParams,
    build_confusion,
    metrics_report,
    read_ground_truth,
    stress_adjust,
)
from .imputation import (
    BisgSource,
    ExternalSource,
    ImputationResult,
    Prediction,
    impute_dataset,
    load_predictions,
    load_surname_priors,
    write_assignments,
)
from .ingest import (
    DEFAULT_MIN_PROPERTIES,
    Dataset,
    assemble_dataset,
    filter_small_tracts,
    parse_demographics,
    parse_parcels,
    write_parcels,
    write_rejects,
)
from .lowess import DEFAULT_FRAC, DEFAULT_ITERS, lowess_trend
from .synth import read_labels

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_IMPUTATION = 4
EXIT_ANALYTICS = 5


@dataclass
class RunConfig:
    parcels: Path
    tracts: Path
    out: Path
    priors: Path | None = None
    predictions: Path | None = None
    ground_truth: Path | None = None
    labels: Path | None = None
    entity_rules: Path | None = None
    name_convention: str = NameConvention.LAST_FIRST.value
    min_properties: int = DEFAULT_MIN_PROPERTIES
    majority_mode: str = an.MajorityMode.STRICT.value
    extreme_white_pop_max: float = an.DEFAULT_WHITE_POP_MAX
    extreme_white_owner_min: float = an.DEFAULT_WHITE_OWNER_MIN
    extreme_measure: str = an.OwnershipMeasure.INDIVIDUAL_ONLY.value
    stress: str = "full"  # preset name, "ground_truth", or a JSON file path
    lowess_frac: float = DEFAULT_FRAC
    lowess_iters: int = DEFAULT_ITERS
    seed: int = 0

    def validate(self, need_model: bool = True) -> None:
        for name in ("parcels", "tracts"):
            if getattr(self, name) is None:
                raise ConfigError(f"--{name} is required")
        for name in ("parcels", "tracts", "priors", "predictions", "ground_truth", "labels", "entity_rules"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name.replace('_', '-')} file not found: {path}")
        if need_model and (self.priors is None) == (self.predictions is None):
            raise ConfigError("give exactly one of --priors (BISG) or --predictions (external model)")
        if self.min_properties < 0:
            raise ConfigError("--min-properties must be >= 0")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if not (0.0 < self.lowess_frac <= 1.0):
            raise ConfigError("--lowess-frac must be in (0, 1]")
        try:
            an.MajorityMode(self.majority_mode)
            an.OwnershipMeasure(self.extreme_measure)
            NameConvention(self.name_convention)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.stress not in PRESET_STRESS and self.stress != "ground_truth" and not Path(self.stress).is_file():
            raise ConfigError(f"--stress must be one of {sorted(PRESET_STRESS)}, 'ground_truth', or a JSON file: {self.stress}")
        if self.stress == "ground_truth" and self.ground_truth is None and self.labels is None:
            raise ConfigError("--stress ground_truth needs --ground-truth or --labels")

    def fingerprint(self) -> dict:
        """Settings that shape the outputs; file names only (not directories)."""
        data = {}
        for k, v in asdict(self).items():
            if k == "out":
                continue
            if isinstance(v, Path):
                v = v.name
            data[k] = v
        return data


@dataclass
class RunResult:
    exit_code: int
    message: str = ""
    files: list[str] = field(default_factory=list)


# -- formatting -----------------------------------------------------------------


def _f(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _pct(x: float | None) -> str:
    return "" if x is None else f"{100.0 * x:.2f}"


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
            n += 1
    return n


def _write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- stages ---------------------------------------------------------------------------


@dataclass
class Loaded:
    dataset: Dataset
    counts: dict
    excluded_tracts: tuple


def load_inputs(cfg: RunConfig, out: Path | None = None) -> Loaded:
    with open(cfg.parcels, encoding="utf-8-sig", newline="") as fh:
        parcels = parse_parcels(fh)
    with open(cfg.tracts, encoding="utf-8-sig", newline="") as fh:
        tracts = parse_demographics(fh)
    ds, quarantined = assemble_dataset(parcels.records, tracts.records)
    filtered = filter_small_tracts(ds, cfg.min_properties)
    if out is not None:
        with open(out / "rejects.csv", "w", newline="", encoding="utf-8") as fh:
            write_rejects(parcels.rejects, fh)
        with open(out / "tract_rejects.csv", "w", newline="", encoding="utf-8") as fh:
            write_rejects(tracts.rejects, fh)
        _write_csv(out / "quarantined.csv", ["parcel_id", "geoid", "reason"], ((p.parcel_id, p.geoid, "UnknownTract") for p in quarantined))
    counts = {
        "parcel_rows_accepted": len(parcels.records),
        "parcel_rows_rejected": len(parcels.rejects),
        "tract_rows_accepted": len(tracts.records),
        "tract_rows_rejected": len(tracts.rejects),
        "parcels_quarantined": len(quarantined),
        "tracts_excluded_small": filtered.n_excluded,
        "tracts_retained": len(filtered.dataset.tracts),
        "parcels_retained": len(filtered.dataset.parcels),
    }
    if not filtered.dataset.parcels:
        log.warning("no tract has at least %d properties; outputs will be empty", cfg.min_properties)
    return Loaded(filtered.dataset, counts, filtered.excluded_tracts)


def _rules(cfg: RunConfig) -> EntityRules:
    return load_rules(cfg.entity_rules) if cfg.entity_rules else default_rules()


def classify_stage(ds: Dataset, rules: EntityRules) -> Dataset:
    parcels = [p if p.owner_type is not None else q for p, q in zip(ds.parcels, classify_parcels(ds.parcels, rules))]
    return Dataset(parcels, ds.tracts)


def impute_stage(cfg: RunConfig, ds: Dataset, rules: EntityRules, out: Path | None = None) -> tuple[ImputationResult, dict]:
    counts: dict = {}
    if cfg.predictions is not None:
        with open(cfg.predictions, encoding="utf-8-sig", newline="") as fh:
            loaded = load_predictions(fh)
        counts["prediction_rows_rejected"] = len(loaded.rejects)
        if out is not None:
            with open(out / "prediction_rejects.csv", "w", newline="", encoding="utf-8") as fh:
                write_rejects(loaded.rejects, fh)
        source: BisgSource | ExternalSource = ExternalSource(loaded.predictions)
    else:
        with open(cfg.priors, encoding="utf-8-sig", newline="") as fh:  # type: ignore[arg-type]
            priors = load_surname_priors(fh)
        source = BisgSource(priors, convention=NameConvention(cfg.name_convention), rules=rules)
    result = impute_dataset(ds, source)
    counts["national_prior_fallbacks"] = len(result.fallbacks)
    return result, counts


def ground_truth_from_labels(labels_path: Path, ds: Dataset, imputation: ImputationResult) -> list[GroundTruthRecord]:
    """Join planted labels to this run's predictions (individual owners only)."""
    with open(labels_path, encoding="utf-8", newline="") as fh:
        labels = read_labels(fh)
    records = []
    for p in ds.parcels:
        lab = labels.get(p.parcel_id)
        pred = imputation.get(p.parcel_id)
        if lab is None or lab.true_race is None or not isinstance(pred, Prediction):
            continue
        records.append(GroundTruthRecord(p.parcel_id, lab.true_race, pred.race, ds.tracts[p.geoid].median_income))
    return records


def resolve_stress(cfg: RunConfig, truth: Sequence[GroundTruthRecord] | None) -> tuple[str, StressParams]:
    if cfg.stress in PRESET_STRESS:
        return cfg.stress, PRESET_STRESS[cfg.stress]
    if cfg.stress == "ground_truth":
        if not truth:
            raise ConfigError("no ground-truth records available for --stress ground_truth")
        return "ground_truth", StressParams.from_confusion(build_confusion((r.true_race, r.predicted_race) for r in truth))
    with open(cfg.stress, encoding="utf-8") as fh:
        return Path(cfg.stress).name, StressParams.from_dict(json.load(fh))


# -- reports ------------------------------------------------------------------------------


def emit_plot_data(
    disparities: Sequence[an.DisparityRecord],
    out_dir: Path,
    frac: float = DEFAULT_FRAC,
    iters: int = DEFAULT_ITERS,
) -> dict[str, str]:
    """Per-race scatter files (x=pop share, y=disparity, w=population) plus LOWESS trends.

    Returns a note per race whose trend could not be computed.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    notes = {}
    for race in RACES:
        recs = sorted((d for d in disparities if d.race is race), key=lambda d: d.geoid)
        if not recs:
            continue
        _write_csv(
            out_dir / f"scatter_{race.label}.csv",
            ["geoid", "x_pop_share", "y_disparity", "w_population"],
            ((d.geoid, _f(d.pop_share), _f(d.disparity), d.weight) for d in recs),
        )
        try:
            curve = lowess_trend([d.pop_share for d in recs], [d.disparity for d in recs], [d.weight for d in recs], frac, iters)
        except TooFewPoints as exc:
            notes[race.label] = f"TooFewPoints: {exc}"
            continue
        except ValueError as exc:
            notes[race.label] = f"skipped: {exc}"
            continue
        _write_csv(out_dir / f"trend_{race.label}.csv", ["x", "y"], ((_f(x), _f(y)) for x, y in zip(curve.x, curve.y)))
    return notes


def _profile_rows(tracts, majority_mode, urban_labels):
    urban = dict(urban_labels)
    for p, d in tracts:
        shares = p.indiv_share_by_race or (None,) * len(RACES)
        yield (
            p.geoid, p.n_properties, p.n_individual, p.n_corporate_like, _f(p.corporate_share),
            *p.owner_count_by_race, *(_f(s) for s in shares),
            *(f"{v:.2f}" for v in p.owner_value_by_race), f"{p.corporate_value:.2f}", f"{p.value_total:.2f}",
            an.group_of(d, majority_mode).value, an.classify_dominant(d).value, urban[p.geoid].value,
        )


def write_reports(cfg: RunConfig, out: Path, ds: Dataset, imputation: ImputationResult, stress_name: str, stress: StressParams) -> dict:
    profiles = an.aggregate_dataset(ds, imputation)
    tracts = an.join(profiles, ds.tracts)
    counts: dict = {"profiles": len(profiles)}
    summary: dict = {"n_tracts": len(profiles), "n_parcels": len(ds.parcels)}

    threshold, urban_labels, urban_rows = an.urbanization_table(tracts)
    summary["urban_core_property_threshold"] = threshold

    race_cols = [r.label for r in RACES]
    counts["profiles.csv"] = _write_csv(
        out / "profiles.csv",
        ["geoid", "n_properties", "n_individual", "n_corporate_like", "corporate_share",
         *(f"owners_{r}" for r in race_cols), *(f"indiv_share_{r}" for r in race_cols),
         *(f"value_{r}" for r in race_cols), "corporate_value", "value_total",
         "majority_group", "dominant_group", "urban_class"],
        _profile_rows(tracts, cfg.majority_mode, urban_labels),
    )

    disparities: list[an.DisparityRecord] = []
    for p, d in tracts:
        if p.n_individual:
            disparities.extend(an.disparity(p, d))
    counts["disparity.csv"] = _write_csv(
        out / "disparity.csv",
        ["geoid", "race", "pop_share", "owner_share", "disparity", "weight"],
        ((r.geoid, r.race.label, _f(r.pop_share), _f(r.owner_share), _f(r.disparity), r.weight) for r in disparities),
    )

    if tracts:
        rows = an.majority_profile_table(tracts, cfg.majority_mode)
    else:
        rows = [an.MajorityProfileRow(g, 0, None, None, 0) for g in an.MajorityGroup]
    header = ["majority_group", "tracts"]
    for r in race_cols:
        header += [f"{r}_pop_pct", f"{r}_owners_pct"]
    counts["majority_profiles.csv"] = _write_csv(
        out / "majority_profiles.csv",
        header,
        (
            [row.group.value, row.n_tracts]
            + [v for r in RACES for v in (_pct(row.pop_mean and row.pop_mean[r]), _pct(row.owner_mean and row.owner_mean[r]))]
            for row in rows
        ),
    )

    extreme = an.find_extreme_disparity(tracts, cfg.extreme_white_pop_max, cfg.extreme_white_owner_min, cfg.extreme_measure)
    counts["extreme_tracts.csv"] = _write_csv(
        out / "extreme_tracts.csv",
        ["geoid", "white_pop_pct", "white_own_pct", "gap_pp", "largest_minority", "minority_pop_pct", "minority_own_pct", "corporate_pct"],
        (
            (t.geoid, _pct(t.white_pop), _pct(t.white_owner), _pct(t.gap), t.minority.label, _pct(t.minority_pop), _pct(t.minority_owner), _pct(t.corporate_share))
            for t in extreme
        ),
    )

    stressed_rows = []
    for t in extreme:
        if cfg.extreme_measure != an.OwnershipMeasure.INDIVIDUAL_ONLY.value:
            break  # stress factors apply to individual-ownership shares only
        s = stress_adjust(t.white_owner, {t.minority: t.minority_owner}, stress)
        stressed_rows.append(
            (t.geoid, _pct(t.white_pop), _pct(t.white_owner), _pct(s.white), t.minority.label,
             _pct(t.minority_owner), _pct(s.minority[t.minority]), _pct(t.minority_pop))
        )
    counts["stressed_extreme.csv"] = _write_csv(
        out / "stressed_extreme.csv",
        ["geoid", "white_pop_pct", "white_own_model_pct", "white_own_stress_pct", "largest_minority",
         "minority_own_model_pct", "minority_own_stress_pct", "minority_pop_pct"],
        stressed_rows,
    )
    summary["stress_params"] = {"source": stress_name, **stress.to_dict()}

    def combined_rows():
        for p, d in tracts:
            minority = an.largest_minority(d)
            combined = an.combined_white_corp(p)
            white_pop = d.pop_share[RaceCategory.WHITE]
            yield (
                p.geoid, _pct(white_pop), _pct(an.race_share_of_all(p, RaceCategory.WHITE)), _pct(p.corporate_share),
                _pct(combined), minority.label, _pct(d.pop_share[minority]), _pct(an.race_share_of_all(p, minority)),
                int(white_pop < 0.5 and combined > 0.5),
            )

    counts["combined_ownership.csv"] = _write_csv(
        out / "combined_ownership.csv",
        ["geoid", "white_pop_pct", "white_indiv_own_of_all_pct", "corp_own_pct", "white_plus_corp_pct",
         "largest_minority", "minority_pop_pct", "minority_indiv_own_of_all_pct", "minority_pop_high_white_corp"],
        combined_rows(),
    )
    counts["combined_by_group.csv"] = _write_csv(
        out / "combined_by_group.csv",
        ["dominant_group", "tracts", "white_owner_pct", "corporate_owner_pct", "white_plus_corp_pct"],
        ((r.group.value, r.n_tracts, _pct(r.white_owner), _pct(r.corporate), _pct(r.white_plus_corp)) for r in an.corporate_ownership_table(tracts)),
    )

    counts["urbanization.csv"] = _write_csv(
        out / "urbanization.csv",
        ["urban_class", "tracts", "mean_white_gap_pp", "mean_corporate_pct"],
        ((r.urban_class.value, r.n_tracts, _pct(r.mean_white_gap), _pct(r.mean_corporate_share)) for r in urban_rows),
    )

    if profiles and any(p.n_individual for p in profiles):
        try:
            summary["value_share_by_race"] = dict(zip(race_cols, an.value_share_by_race(profiles)))
        except ZeroTotalValue:
            summary["value_share_by_race"] = None
        with_owners = [(p, d) for p, d in tracts if p.n_individual]
        summary["share_tracts_white_overrepresented"] = sum(
            1 for p, d in with_owners if p.indiv_share(RaceCategory.WHITE) > d.pop_share[RaceCategory.WHITE]
        ) / len(with_owners)
        summary["corporate_share_all_properties"] = sum(p.n_corporate_like for p in profiles) / sum(p.n_properties for p in profiles)

    plot_notes = emit_plot_data(disparities, out / "plot", cfg.lowess_frac, cfg.lowess_iters)
    summary["plot_notes"] = plot_notes
    _write_json(out / "summary.json", summary)
    return counts


def run_pipeline(cfg: RunConfig, evaluate: bool = True) -> RunResult:
    """Run every stage and write the report bundle into ``cfg.out``."""
    try:
        cfg.validate()
    except ConfigError as exc:
        return RunResult(EXIT_CONFIG, f"config error: {exc}")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    for stale in ("metrics.json",):
        (out / stale).unlink(missing_ok=True)
    counts: dict = {}

    try:
        rules = _rules(cfg)
        loaded = load_inputs(cfg, out)
    except (MissingColumn, OSError, UnicodeDecodeError, ValueError) as exc:
        return RunResult(EXIT_PARSE, f"parse error: {exc}")
    counts.update(loaded.counts)
    ds = classify_stage(loaded.dataset, rules)
    with open(out / "parcels_classified.csv", "w", newline="", encoding="utf-8") as fh:
        write_parcels(ds.parcels, fh)

    try:
        imputation, imp_counts = impute_stage(cfg, ds, rules, out)
    except (MissingColumn, OSError, UnicodeDecodeError) as exc:
        return RunResult(EXIT_PARSE, f"parse error: {exc}")
    except (MissingPrediction, BothPriorsMissing, InvalidDistribution, UnclassifiedParcel, ValueError) as exc:
        return RunResult(EXIT_IMPUTATION, f"imputation error: {exc}")
    counts.update(imp_counts)
    with open(out / "assignments.csv", "w", newline="", encoding="utf-8") as fh:
        write_assignments(imputation, fh)

    truth = None
    try:
        if evaluate and cfg.ground_truth is not None:
            with open(cfg.ground_truth, encoding="utf-8-sig", newline="") as fh:
                truth = read_ground_truth(fh)
        elif evaluate and cfg.labels is not None:
            truth = ground_truth_from_labels(cfg.labels, ds, imputation)
    except (MissingColumn, OSError, ValueError) as exc:
        return RunResult(EXIT_PARSE, f"parse error: {exc}")

    try:
        stress_name, stress = resolve_stress(cfg, truth)
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        return RunResult(EXIT_CONFIG, f"config error: {exc}")

    try:
        counts.update(write_reports(cfg, out, ds, imputation, stress_name, stress))
        if truth:
            _write_json(out / "metrics.json", metrics_report(truth))
            counts["ground_truth_records"] = len(truth)
    except TractEquityError as exc:
        return RunResult(EXIT_ANALYTICS, f"analytics error: {exc}")

    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    fingerprint = cfg.fingerprint()
    manifest = {
        "config": fingerprint,
        "config_hash": hashlib.sha256(json.dumps(fingerprint, sort_keys=True).encode()).hexdigest(),
        "inputs": {
            name: _sha256(Path(getattr(cfg, name)))
            for name in ("parcels", "tracts", "priors", "predictions", "ground_truth", "labels", "entity_rules")
            if getattr(cfg, name) is not None
        },
        "row_counts": counts,
        "outputs": {f: _sha256(out / f) for f in files},
    }
    _write_json(out / "manifest.json", manifest)
    return RunResult(EXIT_OK, f"wrote {len(files) + 1} files to {out}", files + ["manifest.json"])
