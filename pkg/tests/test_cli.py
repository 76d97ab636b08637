import csv
import json

import pytest

from golden import INPUT
from tract_equity.cli import main


def golden_args(*extra):
    return ["--parcels", str(INPUT / "parcels.csv"), "--tracts", str(INPUT / "tracts.csv"), *extra]


def test_ingest_writes_rejects(tmp_path):
    assert main(["ingest", *golden_args("--out", str(tmp_path))]) == 0
    assert "MalformedGeoId" in (tmp_path / "rejects.csv").read_text()
    assert "ORPHAN-1" in (tmp_path / "quarantined.csv").read_text()


def test_classify_entities(tmp_path):
    assert main(["classify-entities", *golden_args("--out", str(tmp_path))]) == 0
    with open(tmp_path / "parcels_classified.csv", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    codes = {r[3]: r[4] for r in rows}
    assert codes["SUMMIT REALTY INC"] == "2" and codes["CITY OF EMPIRE"] == "3" and codes["MAPLE FAMILY TRUST"] == "4"
    assert {r[4] for r in rows} == {"1", "2", "3", "4"}


def test_impute_then_analyze(tmp_path):
    args = golden_args("--predictions", str(INPUT / "predictions.csv"), "--out", str(tmp_path))
    assert main(["impute", *args]) == 0
    assert (tmp_path / "assignments.csv").exists()
    assert main(["analyze", *args]) == 0
    assert (tmp_path / "disparity.csv").exists() and not (tmp_path / "metrics.json").exists()


def test_missing_parcels_exit_2(tmp_path, capsys):
    code = main(["ingest", "--parcels", str(tmp_path / "missing.csv"), "--tracts", str(INPUT / "tracts.csv")])
    assert code == 2
    assert "missing.csv" in capsys.readouterr().err


def test_missing_column_exit_3(tmp_path):
    bad = tmp_path / "tracts.csv"
    bad.write_text("geoid,total_pop\n36047034901,10\n")
    assert main(["ingest", "--parcels", str(INPUT / "parcels.csv"), "--tracts", str(bad), "--out", str(tmp_path / "o")]) == 3


def test_bad_prediction_sum_exit_4(tmp_path):
    preds = tmp_path / "preds.csv"
    lines = (INPUT / "predictions.csv").read_text().splitlines()
    pid = lines[1].split(",")[0]
    lines[1] = f"{pid},0.5,0.5,0.5,0.5,0.5"  # row is rejected, so the parcel has no prediction
    preds.write_text("\n".join(lines) + "\n")
    assert main(["impute", *golden_args("--predictions", str(preds), "--out", str(tmp_path / "o"))]) == 4


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'parcels = "{INPUT / "parcels.csv"}"\ntracts = "{INPUT / "tracts.csv"}"\n'
        f'predictions = "{INPUT / "predictions.csv"}"\nmin-properties = 1000000\n'
    )
    assert main(["--config", str(cfg), "analyze", "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "profiles.csv").read_text().count("\n") == 1
    assert main(["--config", str(cfg), "analyze", "--min-properties", "100", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "profiles.csv").read_text().count("\n") == 7


def test_config_paths_resolve_against_config_dir(tmp_path):
    assert main(["--config", str(INPUT / "config.toml"), "analyze", "--out", str(tmp_path)]) == 0


@pytest.mark.parametrize("body", ["bogus_key = 1\n", "not toml [[["])
def test_bad_config_exit_2(tmp_path, body):
    cfg = tmp_path / "bad.toml"
    cfg.write_text(body)
    assert main(["--config", str(cfg), "run-all", *golden_args("--out", str(tmp_path / "o"))]) == 2


def test_stress_subcommand(capsys):
    assert main(["stress", "--white", "0.730", "--minority", "black=0.213", "--model", "name_only"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert round(100 * report["white"], 1) == 62.9
    assert round(100 * report["minority"]["black"], 1) == 26.8


def test_stress_cap(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"white_fpr": 0.0, "fnr": {"hispanic": 0.5}}))
    assert main(["stress", "--white", "0.1", "--minority", "hispanic=0.9", "--cap", "--model", str(path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["minority"]["hispanic"] == 1.0 and report["capped"] == ["hispanic"]


@pytest.mark.parametrize("minority", ["black", "martian=0.2"])
def test_stress_bad_minority_exit_2(minority):
    assert main(["stress", "--white", "0.5", "--minority", minority]) == 2


def test_evaluate(tmp_path):
    assert main(["evaluate", "--ground-truth", str(INPUT / "ground_truth.csv"), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "metrics.json").read_text())
    assert report["n_records"] == 60
    assert report["weighted"]["recall"] == report["accuracy"]


def test_synth_then_run_all_with_labels(tmp_path):
    data = tmp_path / "synth"
    assert main(["synth", "--n-tracts", "5", "--parcels-min", "110", "--parcels-max", "130", "--seed", "3", "--out", str(data)]) == 0
    code = main([
        "run-all", "--parcels", str(data / "parcels.csv"), "--tracts", str(data / "tracts.csv"),
        "--priors", str(data / "surname_priors.csv"), "--labels", str(data / "labels.csv"),
        "--stress", "ground_truth", "--out", str(tmp_path / "out"),
    ])
    assert code == 0
    assert json.loads((tmp_path / "out" / "metrics.json").read_text())["accuracy"] > 0.8


def test_synth_bad_spec_exit_2(tmp_path):
    assert main(["synth", "--n-tracts", "0", "--out", str(tmp_path)]) == 2
