"""Rebuild the golden fixture under tests/data/golden.

    python scripts/regenerate_golden.py            # refresh expected/ from input/
    python scripts/regenerate_golden.py --inputs   # also rewrite input/ (review the diff!)

Per-parcel outputs (parcels_classified.csv, assignments.csv) are not kept in
expected/; their hashes are pinned through manifest.json.
"""
from __future__ import annotations

import argparse
import csv
import shutil
import sys
import tempfile
from pathlib import Path

from tract_equity.cli import main as cli_main
from tract_equity.domain import RACES
from tract_equity.synth import FIRST_NAMES, SURNAME_POOLS

ROOT = Path(__file__).resolve().parents[1] / "tests" / "data" / "golden"
INPUT = ROOT / "input"
EXPECTED = ROOT / "expected"
PER_PARCEL = {"parcels_classified.csv", "assignments.csv"}

# geoid -> (population, pop shares W/B/H/A/O, owner counts W/B/H/A/O, corporate-like count, median income, urban)
TRACTS = {
    "36047034901": (3900, (0.048, 0.711, 0.150, 0.040, 0.051), (730, 213, 30, 20, 7), 200, 41000.0, True),
    "36005027900": (5200, (0.157, 0.150, 0.644, 0.020, 0.029), (417, 150, 298, 100, 35), 150, 33000.0, True),
    "36029007202": (2700, (0.456, 0.214, 0.303, 0.010, 0.017), (763, 150, 41, 30, 16), 110, 38000.0, True),
    "36067004000": (2100, (0.200, 0.371, 0.300, 0.080, 0.049), (400, 404, 100, 60, 36), 90, 29000.0, True),
    "36001000100": (4100, (0.700, 0.150, 0.080, 0.040, 0.030), (100, 15, 10, 5, 0), 20, 88000.0, False),
    "36001000200": (3300, (0.550, 0.200, 0.150, 0.060, 0.040), (70, 20, 10, 5, 5), 10, 67000.0, True),
    "36001000300": (900, (0.600, 0.200, 0.100, 0.050, 0.050), (60, 10, 10, 5, 0), 14, 72000.0, False),  # 99 parcels
}
ENTITY_NAMES = ("ACME HOLDINGS LLC", "SUMMIT REALTY INC", "CITY OF EMPIRE", "MAPLE FAMILY TRUST", "HARBOR PROPERTIES LP", "FIRST BAPTIST CHURCH")


def build_inputs() -> None:
    INPUT.mkdir(parents=True, exist_ok=True)
    with open(INPUT / "tracts.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["geoid", "total_pop", "share_white", "share_black", "share_hispanic", "share_asian", "share_other", "median_income", "census_urban"])
        for gid, (pop, shares, _, _, income, urban) in TRACTS.items():
            w.writerow([gid, pop, *shares, income, int(urban)])

    parcels, preds = [], []
    k = 0
    for gid, (_, _, owners, n_corp, _, _) in TRACTS.items():
        j = 0
        for race, count in zip(RACES, owners):
            pool = SURNAME_POOLS[race]
            for i in range(count):
                j += 1
                k += 1
                pid = f"{gid}-{j:04d}"
                surname = pool[i % len(pool)]
                first = FIRST_NAMES[k % len(FIRST_NAMES)]
                name = f"{surname}, {first}" if k % 5 == 0 else f"{surname} {first}"
                parcels.append([pid, gid, f"{50000 + (k * 7919) % 400000}.00", name])
                probs = [0.05] * 5
                probs[race] = 0.8
                preds.append([pid, *probs])
        for i in range(n_corp):
            j += 1
            k += 1
            parcels.append([f"{gid}-{j:04d}", gid, f"{80000 + (k * 104729) % 900000}.00", ENTITY_NAMES[i % len(ENTITY_NAMES)]])
    # a few dirty rows that ingest must reject or quarantine
    parcels += [
        ["BAD-1", "36XX1234567", "1000", "SMITH JOHN"],
        ["BAD-2", "36047034901", "-5", "JONES MARY"],
        ["ORPHAN-1", "36999000100", "1000", "LEE ANN"],
    ]
    with open(INPUT / "parcels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parcel_id", "geoid", "assessed_value", "owner_name"])
        w.writerows(parcels)
    with open(INPUT / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parcel_id", "p_white", "p_black", "p_hispanic", "p_asian", "p_other"])
        w.writerows(preds)

    with open(INPUT / "ground_truth.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "true_race", "predicted_race", "median_income"])
        for i in range(60):
            true = RACES[i % 5]
            pred = true if i % 7 else RACES[(i + 1) % 5]
            w.writerow([f"L{i:03d}", true.label, pred.label, 20000.0 + 1500.0 * (i % 30)])

    (INPUT / "config.toml").write_text(
        'parcels = "parcels.csv"\n'
        'tracts = "tracts.csv"\n'
        'predictions = "predictions.csv"\n'
        'ground_truth = "ground_truth.csv"\n'
        "min_properties = 100\n"
        'stress = "name_only"\n',
        encoding="utf-8",
    )


def run_fixture(out: Path) -> int:
    return cli_main(["--config", str(INPUT / "config.toml"), "run-all", "--out", str(out)])


def refresh_expected() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "bundle"
        code = run_fixture(out)
        if code != 0:
            sys.exit(f"run-all failed with exit code {code}")
        if EXPECTED.exists():
            shutil.rmtree(EXPECTED)
        for path in sorted(out.rglob("*")):
            if path.is_file() and path.name not in PER_PARCEL:
                dest = EXPECTED / path.relative_to(out)
                dest.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(path, dest)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--inputs", action="store_true", help="rewrite the input files too")
    args = ap.parse_args()
    if args.inputs:
        build_inputs()
    refresh_expected()
    print(f"golden fixture refreshed under {ROOT}")
