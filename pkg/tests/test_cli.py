import csv
import json

import pytest

from airfl.cli import COLUMNS, OUT_ENV, main

SMALL = ["--rounds", "2", "--max-iters", "2"]


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text("network:\n  num_devices: 3\n  elements_per_ris: 4\nseed: 1\n")
    return p


def read(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_scenario_rows(tmp_path, small_config):
    out = tmp_path / "o"
    assert main(["--experiment", "paper-scenario", "--config", str(small_config), "--seed", "7",
                 "--out", str(out)] + SMALL) == 0
    rows = read(out / "results.csv")
    assert tuple(rows[0]) == COLUMNS
    assert len(rows) == 2 * 5
    assert {r["seed"] for r in rows} == {"7"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["failures"] == [] and len(summary["runs"]) == 5


def test_byte_identical(tmp_path, small_config):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        main(["--config", str(small_config), "--scheme", "multi-RIS", "--out", str(out)] + SMALL)
        outs.append((out / "results.csv").read_bytes())
    assert outs[0] == outs[1]


def test_sweep_table(tmp_path, small_config, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert main(["--experiment", "sweep", "--axis", "M", "--values", "2,4", "--seeds", "2",
                 "--config", str(small_config)] + SMALL) == 0
    rows = read(tmp_path / "env" / "results.csv")
    assert len(rows) == 4
    table = json.loads((tmp_path / "env" / "summary.json").read_text())["table"]
    assert [t["value"] for t in table] == [2, 4] and all(t["seeds"] == 2 for t in table)


def test_missing_config(tmp_path, capsys):
    p = tmp_path / "nope.yaml"
    assert main(["--config", str(p)]) != 0
    assert str(p) in capsys.readouterr().err


def test_invalid_config(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("objective:\n  gamma: -1\n")
    assert main(["--experiment", "validate", "--config", str(p)]) == 2
    assert "gamma" in capsys.readouterr().err


def test_validate_prints(capsys):
    assert main(["--experiment", "validate"]) == 0
    assert json.loads(capsys.readouterr().out)["network"]["elements_per_ris"] == 60


def test_failure_rows_flagged(tmp_path, small_config):
    # K larger than N fails inside the run and is reported as a flagged row
    out = tmp_path / "f"
    code = main(["--experiment", "sweep", "--axis", "K", "--values", "1,5", "--config",
                 str(small_config), "--out", str(out)] + SMALL)
    assert code == 1
    rows = read(out / "results.csv")
    assert [r["experiment"] for r in rows] == ["sweep:K=1", "sweep:K=5:failed"]
    assert rows[1]["round"] == "-1"


def test_usage_errors():
    with pytest.raises(SystemExit):
        main(["--experiment", "sweep"])
    with pytest.raises(SystemExit):
        main(["--experiment", "sweep", "--axis", "M", "--values", "a,b"])
    with pytest.raises(SystemExit):
        main(["--rounds", "0"])
