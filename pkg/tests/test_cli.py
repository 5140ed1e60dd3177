import csv
import json

import pytest

from pspc.cli import main
from pspc.latency import CSV_SCHEMA


def test_demo_reports_threshold_and_verifies(capsys):
    assert main(["demo", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "K = n(m+1) = 9" in out
    assert "decoded == A·B_1: OK" in out
    for l in (3, 4, 6, 7):
        assert f"Z_{l} " in out


def test_demo_small_code(capsys):
    assert main(["demo", "--m", "1", "--n", "2"]) == 0
    assert "K = n(m+1) = 4" in capsys.readouterr().out


def test_demo_hash_is_stable(capsys):
    main(["demo", "--seed", "5"])
    first = capsys.readouterr().out
    main(["demo", "--seed", "5"])
    assert capsys.readouterr().out == first


def test_run_writes_transcript(tmp_path, capsys):
    out = tmp_path / "t.json"
    code = main(["run", "--N", "12", "--M", "4", "--m", "2", "--n", "3", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["params"]["K"] == 9 and len(doc["workers"]) == 12
    assert doc["decoded"] is not None


def test_run_pads_non_divisible_rows(tmp_path):
    out = tmp_path / "t.json"
    assert main(["run", "--r", "5", "--t", "5", "--out", str(out)]) == 0
    decoded = json.loads(out.read_text())["decoded"]
    assert len(decoded) == 5 and len(decoded[0]) == 5


def test_run_rejects_threshold_above_n(tmp_path, capsys):
    out = tmp_path / "t.json"
    assert main(["run", "--N", "8", "--m", "2", "--n", "3", "--out", str(out)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "exceeds N" in err["reason"]
    assert not out.exists()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"N": 8, "m": 1, "n": 2, "seed": 4}))
    out = tmp_path / "t.json"
    assert main(["run", "--config", str(cfg), "--N", "6", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["params"]["N"] == 6 and doc["seed"] == 4


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["run", "--config", str(cfg)]) == 2


def test_simulate_fig2(tmp_path):
    out = tmp_path / "fig2.csv"
    assert main(["simulate", "--preset", "fig2", "--trials", "2000", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == f"# schema={CSV_SCHEMA}"
    rows = list(csv.DictReader(lines[1:]))
    assert len(rows) == 12
    assert sorted({r["K"] for r in rows}) == ["10", "4", "6", "8"]


def test_simulate_fig3(tmp_path):
    out = tmp_path / "fig3.csv"
    assert main(["simulate", "--preset", "fig3", "--trials", "1000", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.read_text().splitlines()[1:]))
    assert len({r["mu"] for r in rows}) == 9


def test_simulate_divergent_point_warns(tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert main(["simulate", "--m", "5", "--n", "2", "--trials", "100", "--out", str(out)]) == 0
    assert "warning" in capsys.readouterr().err
    assert "skipped" in out.read_text()


def test_audit_default_passes(tmp_path, capsys):
    out = tmp_path / "audit.json"
    assert main(["audit", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True


def test_audit_zero_point_fails(tmp_path, capsys):
    out = tmp_path / "audit.json"
    assert main(["audit", "--allow-zero-point", "--samples", "3000", "--out", str(out)]) == 1
    assert "masking_bijection" in capsys.readouterr().err


def test_audit_underpowered_warns(tmp_path, capsys):
    out = tmp_path / "audit.json"
    main(["audit", "--samples", "100", "--out", str(out)])
    assert "statistical power insufficient" in capsys.readouterr().err


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["bogus"])
