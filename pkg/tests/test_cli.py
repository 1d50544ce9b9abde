import configparser
import csv

import pytest

from coldplasma.cli import main


def run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_point_mode_delta(tmp_path, capsys):
    code, out = run(tmp_path, "p", "criterion", "--v0", "0", "--e0", "0")
    assert code == 0
    assert "Delta = -1" in capsys.readouterr().out
    assert float(rows(out / "point.csv")[0]["lhs"]) == -1.0


def test_laser_criterion_smooth(tmp_path, capsys):
    code, out = run(tmp_path, "c", "criterion", "--preset", "laser", "--a", "0.05", "--n-cells", "512")
    assert code == 0 and "verdict: smooth" in capsys.readouterr().out
    table = rows(out / "criterion.csv")
    assert len(table) == 512 and all(r["blowup"] == "0" for r in table)


def test_pressure_criterion_has_lhs_rhs(tmp_path):
    code, out = run(tmp_path, "cp", "criterion", "--preset", "laser", "--a", "0.05", "--alpha", "1", "--gamma", "2",
                    "--n-cells", "256")
    assert code == 0
    assert {"lhs", "rhs"} <= set(rows(out / "criterion.csv")[0])


def test_negative_nu_is_config_error(tmp_path):
    assert run(tmp_path, "ph", "phase", "--nu", "-1")[0] == 2


def test_bad_flag_value_is_config_error(tmp_path):
    assert run(tmp_path, "bad", "solve", "--preset", "laser", "--a", "-3")[0] == 2
    assert run(tmp_path, "bad2", "solve", "--cfl", "abc")[0] == 2


def test_phase_outputs(tmp_path):
    code, out = run(tmp_path, "ph3", "phase", "--nu", "3", "--rays", "24")
    assert code == 0
    kinds = [r["kind"] for r in rows(out / "equilibria.csv")]
    assert kinds == ["stable_node", "saddle", "unstable_node"]
    assert len(rows(out / "boundary.csv")) > 10


def test_characteristics_modes(tmp_path):
    code, out = run(tmp_path, "sw", "characteristics", "--n", "11", "--t-end", "20")
    assert code == 0 and len(rows(out / "sweep.csv")) == 121
    code, out = run(tmp_path, "one", "characteristics", "--v0", "0.5", "--e0", "0.5")
    assert code == 0 and (out / "trajectory.csv").exists()


def test_solve_writes_run_directory(tmp_path):
    code, out = run(tmp_path, "s", "solve", "--preset", "laser", "--a", "0.05", "--mu", "0.1", "--t-end", "2",
                    "--output-dt", "1", "--x-min", "-10", "--x-max", "10", "--n-cells", "128")
    assert code == 0
    assert sorted(p.name for p in out.glob("run_*.csv")) == ["run_0.csv", "run_1.csv", "run_2.csv"]
    assert (out / "config.ini").exists() and (out / "report.json").exists()


def test_stochastic_byte_identical_and_config_replay(tmp_path):
    args = ["stochastic", "--sigma", "0.1", "--n", "20000", "--seed", "7", "--t-end", "0.5"]
    _, a = run(tmp_path, "a", *args)
    _, b = run(tmp_path, "b", *args, "--threads", "3")
    code, c = run(tmp_path, "c", "stochastic", "--config", str(a / "config.ini"))
    assert code == 0
    for name in ("moments_0.csv", "ensemble_final.bin"):
        assert (a / name).read_bytes() == (b / name).read_bytes() == (c / name).read_bytes()


def test_config_file_sections_and_override(tmp_path):
    cfg = tmp_path / "run.ini"
    cp = configparser.ConfigParser()
    cp["global"] = {"seed": "3"}
    cp["criterion"] = {"a": "0.2", "n-cells": "64"}
    with open(cfg, "w") as fh:
        cp.write(fh)
    code, out = run(tmp_path, "cfg", "criterion", "--config", str(cfg), "--a", "0.1")
    assert code == 0
    echo = configparser.ConfigParser()
    echo.read(out / "config.ini")
    assert echo["criterion"]["a"] == "0.1" and echo["criterion"]["n_cells"] == "64"
    assert echo["criterion"]["seed"] == "3"


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[criterion]\nbogus = 1\n")
    assert run(tmp_path, "x", "criterion", "--config", str(cfg))[0] == 2


def test_verify_unknown_suite(tmp_path):
    assert run(tmp_path, "v", "verify", "--suite", "nope")[0] == 2


@pytest.mark.slow
def test_verify_delta_sweep_passes(tmp_path, capsys):
    code, _ = run(tmp_path, "v1", "verify", "--suite", "delta_sweep")
    assert code == 0 and "PASS" in capsys.readouterr().out
