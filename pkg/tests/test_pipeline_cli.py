from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from wermerlab.cli import main
from wermerlab.pipeline import (CALIBRATION_COLUMNS, EXIT_AUDIT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, PLOT_SCHEMAS,
                                RunConfig, emit_plot_data)

SMALL = {"m": 4, "horizon": 6, "audit_ns": [2, 3], "audit_samples": 200, "beta_disks": 4, "beta_grid": 12,
         "z_spacing": 0.5, "theta_samples": 8}


def _header(path):
    with open(path, encoding="utf-8") as fh:
        return next(csv.reader(fh))


@pytest.mark.parametrize("field, value", [("m", 1), ("safety", 1.0), ("horizon", 0), ("c_step", -1.0),
                                          ("beta_grid", 0)])
def test_config_validation(field, value):
    cfg = RunConfig(**{field: value})
    with pytest.raises(ValueError):
        cfg.validate()


def test_config_round_trip_and_digest():
    cfg = RunConfig(m=5, audit_ns=(2, 4), out="a")
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert RunConfig(m=5, audit_ns=(2, 4), out="b").digest() == cfg.digest()
    assert RunConfig(m=5, audit_ns=(2, 4), seed=1).digest() != cfg.digest()
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})


def test_run6_artifacts(run6):
    assert run6.ok
    assert run6.q0 >= 1
    names = set(run6.files)
    assert names == {"schedule.json", "profile.json", "audit.json", "manifest.json", "calibration.csv"}
    assert _header(run6.files["calibration.csv"]) == CALIBRATION_COLUMNS
    man = json.loads(open(run6.files["manifest.json"]).read())
    assert man["config_hash"] == run6.config.digest()
    assert set(man["versions"]) == {"wermerlab", "numpy", "scipy", "python"}
    assert "out" not in man["config"]
    raw = open(run6.files["calibration.csv"], "rb").read()
    assert b"\r" not in raw


def test_calibration_rows_are_consistent(run6):
    rows = run6.rows
    cs = [r["c"] for r in rows]
    assert all(b > a for a, b in zip(cs, cs[1:]))
    for r in rows:
        assert r["q"] >= r["q_raw"]
        if r["n"] >= run6.q0:
            assert r["delta"] == pytest.approx(0.5 * r["delta_star"])


@pytest.mark.parametrize("kind", ["alpha", "beta", "branches"])
def test_plot_data_schema(run6, tmp_path, kind):
    path = emit_plot_data(kind, run6.config.out, tmp_path, n=2, per_side=4, deltas=[1e-3, 0.1])
    assert _header(path) == PLOT_SCHEMAS[kind]
    assert (tmp_path / f"{kind}_plot.py").exists()
    with open(path, encoding="utf-8") as fh:
        assert len(list(csv.reader(fh))) > 1


def test_plot_data_missing_artifacts(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plot_data("alpha", tmp_path)
    with pytest.raises(ValueError):
        emit_plot_data("histogram", tmp_path)


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == EXIT_USAGE
    assert main(["plot", "--kind", "alpha", "--run", "/nonexistent/run"]) == EXIT_USAGE


def test_cli_spiral_and_options_anywhere(tmp_path, capsys):
    assert main(["--seed", "3", "lattice", "spiral", "--n", "5", "--out", str(tmp_path)]) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 3
    assert (tmp_path / "spiral.csv").read_text().startswith("index,re,im\n")


def test_cli_numeric_failure_exit(capsys):
    assert main(["hm", "sh93", "--k", "1", "--slits=-0.5:0.5", "--walkers", "100"]) == EXIT_NUMERIC


def test_cli_pipeline_small_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "run")]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["ok"]


def test_cli_corrupted_schedule_exit(tmp_path, run6, capsys):
    bad = json.loads(open(run6.files["schedule.json"]).read())
    bad["eps"][2] *= 100
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    code = main(["pipeline", "--config", str(cfg), "--schedule-file", str(path), "--out", str(tmp_path / "r")])
    assert code == EXIT_AUDIT
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{}")
    code = main(["pipeline", "--config", str(cfg), "--schedule-file", str(garbage), "--out", str(tmp_path / "g")])
    assert code == EXIT_AUDIT


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "wermerlab.cli", "calibrate", "c", "--n", "4", "--q", "2.5",
                          "--q0", "3", "--q-tilde", "3.0"], capture_output=True, text=True)
    assert res.returncode == EXIT_OK
    assert "c" in json.loads(res.stdout)
