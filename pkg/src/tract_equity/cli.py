"""``tract-equity`` command line.

Each stage has its own subcommand; ``run-all`` chains them and writes the full
report bundle. Settings can come from a TOML file passed with ``--config``;
explicit flags win over file values.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import analytics as an
from .domain import RaceCategory
from .entities import NameConvention
from .errors import ConfigError, FnrOutOfRange, InvalidSpec, MissingColumn, TractEquityError
from .evaluation import PRESET_STRESS, StressParams, metrics_report, read_ground_truth, stress_adjust
from .imputation import write_assignments
from .ingest import DEFAULT_MIN_PROPERTIES, write_demographics, write_parcels
from .lowess import DEFAULT_FRAC, DEFAULT_ITERS
from .pipeline import (
    EXIT_ANALYTICS,
    EXIT_CONFIG,
    EXIT_IMPUTATION,
    EXIT_OK,
    EXIT_PARSE,
    RunConfig,
    _rules,
    classify_stage,
    impute_stage,
    load_inputs,
    run_pipeline,
)
from .synth import SyntheticSpec, generate_synthetic, write_synthetic

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("tract_equity")

_PATH_KEYS = {"parcels", "tracts", "priors", "predictions", "ground_truth", "labels", "entity_rules", "out"}


def _add_inputs(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("--parcels", type=Path, help="parcel CSV (parcel_id, geoid, assessed_value, owner_name)")
    p.add_argument("--tracts", type=Path, help="tract demographics CSV")
    p.add_argument("--min-properties", type=int, help=f"drop tracts with fewer parcels (default {DEFAULT_MIN_PROPERTIES})")
    p.add_argument("--entity-rules", type=Path, help="TOML keyword rules for owner classification")
    if model:
        p.add_argument("--priors", type=Path, help="surname prior CSV; runs BISG")
        p.add_argument("--predictions", type=Path, help="per-parcel race probabilities from an external model")
        p.add_argument("--name-convention", choices=[c.value for c in NameConvention])


def _add_analysis(p: argparse.ArgumentParser) -> None:
    p.add_argument("--majority-mode", choices=[m.value for m in an.MajorityMode])
    p.add_argument("--extreme-white-pop-max", type=float, help="White population share ceiling (default 0.5)")
    p.add_argument("--extreme-white-owner-min", type=float, help="White ownership floor (default 0.40)")
    p.add_argument("--extreme-measure", choices=[m.value for m in an.OwnershipMeasure])
    p.add_argument("--stress", help="full, name_only, ground_truth, or a JSON parameter file (default full)")
    p.add_argument("--lowess-frac", type=float, help=f"LOWESS span (default {DEFAULT_FRAC:.4f})")
    p.add_argument("--lowess-iters", type=int, help=f"robustness iterations (default {DEFAULT_ITERS})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tract-equity", description="Tract-level homeownership disparity analysis.")
    parser.add_argument("--config", type=Path, help="TOML file with default settings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate inputs and write cleaned copies plus rejects")
    _add_inputs(p, model=False)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("classify-entities", help="tag each parcel owner as individual, corporate, government or trust")
    _add_inputs(p, model=False)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("impute", help="assign a race distribution to each individually-owned parcel")
    _add_inputs(p)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("analyze", help="tract profiles, disparity tables and plot data")
    _add_inputs(p)
    _add_analysis(p)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("evaluate", help="confusion metrics from a ground-truth file")
    p.add_argument("--ground-truth", type=Path, required=True)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("stress", help="apply error-rate adjustment to ownership shares")
    p.add_argument("--white", type=float, required=True, help="White ownership share")
    p.add_argument("--minority", action="append", default=[], metavar="RACE=SHARE", help="repeatable")
    p.add_argument("--model", default="full", help="full, name_only, or a JSON parameter file")
    p.add_argument("--cap", action="store_true", help="clip stressed shares at 1")

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset with planted ground truth")
    p.add_argument("--n-tracts", type=int, default=50)
    p.add_argument("--parcels-min", type=int, default=150)
    p.add_argument("--parcels-max", type=int, default=250)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("run-all", help="every stage, ending in the full report bundle")
    _add_inputs(p)
    _add_analysis(p)
    p.add_argument("--ground-truth", type=Path)
    p.add_argument("--labels", type=Path, help="synthetic labels.csv; scored against this run's predictions")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from None
    base = path.parent
    out = {}
    for key, value in data.items():
        key = key.replace("-", "_")
        if key in _PATH_KEYS and isinstance(value, str):
            value = base / value
        out[key] = value
    return out


def _settings(args: argparse.Namespace) -> dict:
    merged = _load_config(args.config)
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        merged[key] = value
    return merged


def _run_config(settings: dict) -> RunConfig:
    known = set(RunConfig.__dataclass_fields__)
    unknown = sorted(set(settings) - known - {"white", "minority", "model", "cap", "n_tracts", "parcels_min", "parcels_max"})
    if unknown:
        raise ConfigError(f"unknown setting(s): {', '.join(unknown)}")
    kwargs = {k: v for k, v in settings.items() if k in known}
    for key in _PATH_KEYS:
        if kwargs.get(key) is not None:
            kwargs[key] = Path(kwargs[key])
    for key in ("parcels", "tracts", "out"):
        kwargs.setdefault(key, None)
    if kwargs["out"] is None:
        kwargs["out"] = Path("out")
    return RunConfig(**kwargs)


def _cmd_prepare(settings: dict, stage: str) -> int:
    cfg = _run_config(settings)
    cfg.validate(need_model=False)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        loaded = load_inputs(cfg, out)
    except (MissingColumn, OSError, UnicodeDecodeError, ValueError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    ds = loaded.dataset
    if stage == "ingest":
        with open(out / "parcels_clean.csv", "w", newline="", encoding="utf-8") as fh:
            write_parcels(ds.parcels, fh)
        with open(out / "tracts_clean.csv", "w", newline="", encoding="utf-8") as fh:
            write_demographics(ds.tracts.values(), fh)
    else:
        ds = classify_stage(ds, _rules(cfg))
        with open(out / "parcels_classified.csv", "w", newline="", encoding="utf-8") as fh:
            write_parcels(ds.parcels, fh)
    print(json.dumps(loaded.counts, sort_keys=True))
    return EXIT_OK


def _cmd_impute(settings: dict) -> int:
    cfg = _run_config(settings)
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        loaded = load_inputs(cfg, out)
    except (MissingColumn, OSError, UnicodeDecodeError, ValueError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    rules = _rules(cfg)
    ds = classify_stage(loaded.dataset, rules)
    try:
        result, counts = impute_stage(cfg, ds, rules, out)
    except (MissingColumn, OSError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (TractEquityError, ValueError) as exc:
        print(f"imputation error: {exc}", file=sys.stderr)
        return EXIT_IMPUTATION
    with open(out / "assignments.csv", "w", newline="", encoding="utf-8") as fh:
        write_assignments(result, fh)
    print(json.dumps({**loaded.counts, **counts}, sort_keys=True))
    return EXIT_OK


def _cmd_evaluate(settings: dict) -> int:
    path = Path(settings["ground_truth"])
    if not path.is_file():
        raise ConfigError(f"ground-truth file not found: {path}")
    try:
        with open(path, encoding="utf-8-sig", newline="") as fh:
            records = read_ground_truth(fh)
    except (MissingColumn, ValueError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        report = metrics_report(records)
    except TractEquityError as exc:
        print(f"analytics error: {exc}", file=sys.stderr)
        return EXIT_ANALYTICS
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if settings.get("out"):
        out = Path(settings["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_stress(settings: dict) -> int:
    model = settings.get("model", "full")
    if model in PRESET_STRESS:
        params = PRESET_STRESS[model]
    else:
        try:
            with open(model, encoding="utf-8") as fh:
                params = StressParams.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read stress parameters {model}: {exc}") from None
    minorities = {}
    for item in settings.get("minority", []):
        name, sep, share = item.partition("=")
        if not sep:
            raise ConfigError(f"--minority expects RACE=SHARE, got {item!r}")
        try:
            minorities[RaceCategory.parse(name)] = float(share)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        res = stress_adjust(float(settings["white"]), minorities, params, cap=bool(settings.get("cap")))
    except (ValueError, FnrOutOfRange) as exc:
        print(f"analytics error: {exc}", file=sys.stderr)
        return EXIT_ANALYTICS
    report = {
        "white": res.white,
        "minority": {r.label: v for r, v in sorted(res.minority.items())},
        "capped": [r.label for r in res.capped],
        "params": params.to_dict(),
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_synth(settings: dict) -> int:
    spec = SyntheticSpec(
        n_tracts=int(settings.get("n_tracts", 50)),
        parcels_min=int(settings.get("parcels_min", 150)),
        parcels_max=int(settings.get("parcels_max", 250)),
    )
    try:
        spec.validate()
    except InvalidSpec as exc:
        raise ConfigError(str(exc)) from None
    data = generate_synthetic(spec, seed=int(settings.get("seed", 0)))
    paths = write_synthetic(data, settings.get("out") or "synthetic")
    print(json.dumps({k: str(v) for k, v in sorted(paths.items())}, indent=2))
    return EXIT_OK


def _cmd_run(settings: dict, evaluate: bool) -> int:
    result = run_pipeline(_run_config(settings), evaluate=evaluate)
    stream = sys.stdout if result.exit_code == EXIT_OK else sys.stderr
    print(result.message, file=stream)
    return result.exit_code


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("TRACT_EQUITY_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        settings = _settings(args)
        if args.command in ("ingest", "classify-entities"):
            return _cmd_prepare(settings, args.command)
        if args.command == "impute":
            return _cmd_impute(settings)
        if args.command == "evaluate":
            return _cmd_evaluate(settings)
        if args.command == "stress":
            return _cmd_stress(settings)
        if args.command == "synth":
            return _cmd_synth(settings)
        return _cmd_run(settings, evaluate=args.command == "run-all")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TractEquityError as exc:
        print(f"analytics error: {exc}", file=sys.stderr)
        return EXIT_ANALYTICS


if __name__ == "__main__":
    sys.exit(main())
