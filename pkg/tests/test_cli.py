import csv
import json

import pytest
import yaml

from ufda.cli import main

TINY = {"scenario": {"n_per_class": 8}, "train": {"epochs": 2, "batch_size": 32},
        "federation": {"source_initial_steps": 5, "source_steps_per_round": 1}}


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


def test_run_twice_is_byte_identical(cfg, tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["run", str(cfg), "--out", str(tmp_path / name), "--seed", "7"]) == 0
    for f in ("report.json", "per_class.csv", "voting.csv", "diagnostics.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["seed"] == 7 and rep["config"]["train"]["epochs"] == 2
    assert "metric" in capsys.readouterr().out


def test_mode_flags(cfg, tmp_path):
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--pseudo", "psl", "--no-gcld", "--no-mvd"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["config"]["modes"] == {"pseudo": "psl", "gcld": False, "mvd": False, "mvd_view": "both",
                                      "sfda": False}
    assert not (tmp_path / "o" / "voting.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("train:\n  lr: -1\n  bogus: 2\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_ablate_grid(cfg, tmp_path):
    assert main(["ablate", str(cfg), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "ablation.csv")))
    assert len(rows) == 8
    flags = {(r["PSL"], r["PHL"], r["GCLD"], r["MVD"]) for r in rows}
    assert len(flags) == 8
    assert rows[0]["cell"] == "psl"
    assert all(r["n_ok"] == "1" for r in rows)


def test_sweep_r(cfg, tmp_path):
    assert main(["sweep", str(cfg), "--param", "r", "--values", "0.2", "0.5", "1", "5", "10",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep_r.csv")))
    assert [r["r"] for r in rows] == ["0.2", "0.5", "1.0", "5.0", "10.0"]
    assert len(list(tmp_path.glob("r=*/seed0/report.json"))) == 5


def test_scenario_dump(cfg, tmp_path):
    out = tmp_path / "domains"
    assert main(["scenario", str(cfg), "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["config.yaml", "label_space.json", "source0.txt", "source1.txt", "source2.txt", "target.txt"]
    assert (out / "target.txt").read_text().startswith("ufda-dataset 1\n")
