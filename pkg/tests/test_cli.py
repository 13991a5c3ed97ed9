import json

import numpy as np
import pytest

from extranmf import bench, cli, data


def test_gen_and_convert_round_trip(tmp_path, capsys):
    mtx, csv_ = tmp_path / "x.mtx", tmp_path / "x.csv"
    assert cli.main(["gen", "lowrank", str(mtx), "-m", "8", "-n", "6", "-r", "2", "--seed", "3"]) == 0
    assert cli.main(["convert", str(mtx), str(csv_)]) == 0
    np.testing.assert_array_equal(data.read_dense(csv_), data.gen_lowrank(8, 6, 2, 3))
    back = tmp_path / "y.mtx"
    assert cli.main(["convert", str(csv_), str(back)]) == 0
    assert back.read_bytes() == mtx.read_bytes()


def test_run_writes_csv_and_factors(tmp_path, capsys):
    x = tmp_path / "x.csv"
    data.write_dense(x, data.gen_lowrank(10, 9, 2, 1))
    out = tmp_path / "out"
    rc = cli.main(["run", str(x), "--algo", "e-ahals-hp3", "-r", "2", "--iters", "4", "--out", str(out)])
    assert rc == 0
    lines = (out / "run_x_e-ahals-hp3_0.csv").read_text().splitlines()
    assert len(lines) == 6
    assert data.read_dense(out / "W.csv").shape == (10, 2)
    assert "final relative error" in capsys.readouterr().out


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    rc = cli.main(["suite", "--datasets", "1", "--inits", "1", "-m", "6", "-n", "5", "-r", "2",
                   "--iters", "2", "--algos", "anls,e-anls-hp1", "--format", "json"])
    assert rc == 0
    summary = json.loads((tmp_path / "envout" / "summary.json").read_text())
    assert set(summary["algorithms"]) == {"anls", "e-anls-hp1"}


def test_solver_overrides_reach_config(tmp_path):
    rc = cli.main(["suite", "--datasets", "1", "--inits", "1", "-m", "6", "-n", "5", "-r", "2",
                   "--iters", "1", "--algos", "e-anls-hp1", "--gamma", "1.2", "--gamma-bar", "1.1",
                   "--hp", "2", "--format", "json", "--out", str(tmp_path)])
    assert rc == 0
    cfg = json.loads((tmp_path / "summary.json").read_text())["config"]["algorithms"]["e-anls-hp1"]
    assert (cfg["gamma"], cfg["gamma_bar"], cfg["hp"]) == (1.2, 1.1, 2)


def test_failed_run_gives_nonzero_exit(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise FloatingPointError("injected")

    monkeypatch.setattr(bench.engine, "run", boom)
    rc = cli.main(["suite", "--datasets", "1", "--inits", "1", "-m", "6", "-n", "5", "-r", "2",
                   "--iters", "2", "--algos", "anls", "--out", str(tmp_path)])
    assert rc != 0
    assert "injected" in capsys.readouterr().err


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.mtx"
    bad.write_text("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n")
    assert cli.main(["convert", str(bad), str(tmp_path / "o.csv")]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_algorithm_rejected():
    with pytest.raises(SystemExit):
        cli.main(["run", "x.csv", "--algo", "apg"])
