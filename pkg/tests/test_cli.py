import csv
import json

import pytest

from superburst.cli import config_hash, main


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_g2_initial_peak_at_pi(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["g2-initial", "--n", "900", "--a-grid", "0.8:1.2:81", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 81
    best = max(rows, key=lambda r: float(r["g2_largeN"]))
    assert float(best["A_over_pi"]) == 1.0 and float(best["g2_largeN"]) == 2.0
    manifest = json.loads((tmp_path / "g2-initial_manifest.json").read_text())
    assert manifest["outputs"] == [str(out)]


def test_unknown_flag_is_usage_error_without_files(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert main(["g2-initial", "--n", "9", "--bogus", "--out", str(out)]) == 2
    assert "usage" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_bad_a_grid_is_usage_error(tmp_path):
    assert main(["g2-initial", "--n", "9", "--a-grid", "1:2", "--out", str(tmp_path / "g.csv")]) == 2


def test_dicke_outputs(tmp_path):
    rc = main(["dicke", "--n", "9", "--t-max", "2", "--bins", "20", "--two-time", "--out-dir", str(tmp_path)])
    assert rc == 0
    flux = _rows(tmp_path / "dicke_flux.csv")
    assert float(flux[0]["P_over_gamma"]) == 9.0
    grid = _rows(tmp_path / "dicke_g2.csv")
    assert len(grid) == 400
    assert list(grid[0]) == ["t1_ns", "t2_ns", "g2"]


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"n_atoms": 10, "beta": 2.0}))
    assert main(["twa", "--config", str(cfg), "--n-traj", "4", "--out", str(tmp_path / "t.csv")]) == 3


def test_compute_error_exit_code(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"n_atoms": 10, "beta": 0.5}))
    # a single trajectory has no error estimate
    assert main(["twa", "--config", str(cfg), "--n-traj", "1", "--out", str(tmp_path / "t.csv")]) == 1
    assert not (tmp_path / "t.csv").exists()


def test_twa_seed_env_override(tmp_path, monkeypatch):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"n_atoms": 20, "beta": 0.2, "seed": 1}))
    args = ["twa", "--config", str(cfg), "--n-traj", "20", "--bins", "3", "--t-max-ns", "30"]
    assert main(args + ["--out", str(tmp_path / "a.csv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv")]) == 0
    monkeypatch.setenv("SUPERBURST_SEED", "2")
    assert main(args + ["--out", str(tmp_path / "c.csv")]) == 0
    a, b, c = (open(tmp_path / f"{x}.csv").read() for x in "abc")
    assert a == b and a != c
    assert list(_rows(tmp_path / "a.csv")[0]) == ["t_ns", "power", "power_err", "g2_tt", "g2_tt_err"]
    assert json.loads((tmp_path / "twa_manifest.json").read_text())["seed"] == 2


def test_twa_sweep(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"n_atoms": 20, "beta": 0.2}))
    out = tmp_path / "s.csv"
    assert main(["twa", "--config", str(cfg), "--n-traj", "10", "--sweep", "0.5:1.0:2", "--out", str(out)]) == 0
    assert [r["A_over_pi"] for r in _rows(out)] == ["0.5", "1.0"]


def test_hbt_synth_then_analyze(tmp_path):
    tags = tmp_path / "tags.csv"
    grid = tmp_path / "grid.csv"
    assert main(["hbt", "synth", "coherent", "--trials", "500", "--out", str(tags)]) == 0
    assert main(["hbt", "analyze", "--in", str(tags), "--bin-ns", "30", "--out", str(grid)]) == 0
    rows = _rows(grid)
    assert list(rows[0]) == ["t1_ns", "t2_ns", "n_c", "g2", "g2_err"]
    # cells without coincidences are blank, not NaN
    assert all(r["g2"] != "nan" for r in rows)
    assert any(r["g2"] == "" for r in rows)


def test_reproduce_sm_fig(tmp_path):
    assert main(["reproduce", "sm-fig", "--out-dir", str(tmp_path)]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"sm_N9_flux.csv", "sm_N9_g2.csv", "sm_N200_flux.csv", "sm_N200_g2.csv"} <= names


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": 0.1}) == config_hash({"b": 0.1, "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_no_temp_files_left(tmp_path):
    main(["g2-initial", "--n", "10", "--out", str(tmp_path / "g.csv")])
    assert not [p for p in tmp_path.iterdir() if p.name.endswith(".tmp")]


@pytest.mark.parametrize("argv", [[], ["nonsense"], ["reproduce", "fig9"]])
def test_usage_errors(argv):
    assert main(argv) == 2
