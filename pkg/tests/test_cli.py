import json

from conformal_absint.cli import main


def test_demo(capsys):
    assert main(["demo"]) == 0
    out = capsys.readouterr().out
    assert "compositional  (1, 3)" in out
    assert "v = (3, 9)" in out


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"suite": "mnist", "colour": "blue"}))
    assert main(["run", "--config", str(p)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_run_writes_reports(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({"n_cal": 200, "n_test": 30, "trials": 1, "programs": ["sum of list elements"]}))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "4"]) == 0
    doc = json.loads((out / "tiny.json").read_text())
    assert doc["config"]["seed"] == 4
    assert (out / "tiny.csv").exists() and (out / "tiny.txt").exists()


def test_oracle_check_small(capsys):
    assert main(["oracle-check", "--n", "20", "--only", "properties"]) == 0
    assert "failures" in capsys.readouterr().out
