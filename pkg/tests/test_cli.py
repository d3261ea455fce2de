import csv
import json
from pathlib import Path

import pytest

from fillrad_lab.cli import SCHEMA, config_hash, main, run, validate_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for kind in SCHEMA["properties"]["kind"]["enum"]:
        assert kind in out


def test_validate_good(capsys):
    assert main(["validate", "--config", str(CONFIGS / "fillrad_circle.json")]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_out_of_range_reports_line(capsys):
    assert main(["validate", "--config", str(CONFIGS / "bad.json")]) == 2
    out = capsys.readouterr().out
    assert out.startswith("line 7: r/0: out of range")


def test_validate_missing_kind():
    diags = validate_config({"schema": 1})
    assert any("missing required field 'kind'" in d for d in diags)


def test_malformed_json_exit_code(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"schema": 1,,}')
    assert main(["validate", "--config", str(p)]) == 2
    assert "line 1 column" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, capsys):
    cfg = {"schema": 1, "kind": "nerve-audit", "model": {"kind": "circle", "n": 16},
           "cover": "strips", "R": [1.0], "r": [0.2]}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "NotAProduct" in capsys.readouterr().err


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert len(config_hash({"a": 1})) == 16


def test_bound_calculator(tmp_path):
    cfg = json.loads((CONFIGS / "bound.json").read_text())
    run(cfg, tmp_path)
    rows = read_rows(tmp_path / "bound-calculator.csv")
    assert [r["value"] for r in rows] == ["16", "7776"]


def test_fillrad_run_deterministic(tmp_path):
    cfg = json.loads((CONFIGS / "fillrad_circle.json").read_text())
    m1 = run(cfg, tmp_path / "a")
    m2 = run(cfg, tmp_path / "b")
    assert m1["outputs"] == m2["outputs"]
    rows = read_rows(tmp_path / "a" / "fillrad.csv")
    est = {int(r["n"]): float(r["estimate"]) for r in rows}
    assert 0.97 <= est[64] <= 1.12
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config_hash"] == config_hash(cfg)
    assert manifest["status"]["ok"]


def test_seed_override_changes_hash(tmp_path, capsys):
    p = CONFIGS / "bound.json"
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "a")]) == 0
    h1 = json.loads(capsys.readouterr().out)["config_hash"]
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "b"), "--seed", "5"]) == 0
    h2 = json.loads(capsys.readouterr().out)["config_hash"]
    assert h1 != h2


@pytest.mark.slow
def test_nerve_audit_parallel_matches_serial(tmp_path):
    cfg = json.loads((CONFIGS / "nerve_strips.json").read_text())
    m1 = run(cfg, tmp_path / "a", jobs=1)
    m2 = run(cfg, tmp_path / "b", jobs=2, plots=True)
    assert m1["outputs"]["nerve-audit.csv"] == m2["outputs"]["nerve-audit.csv"]
    rows = read_rows(tmp_path / "a" / "nerve-audit.csv")
    assert all(r["lip_ok"] == "true" and r["round_trip_ok"] == "true" for r in rows)
    assert (tmp_path / "b" / "nerve-audit.png").exists()
