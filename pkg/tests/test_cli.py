import csv
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from grassflow.cli import EXPERIMENTS, ConfigError, list_experiments, main, parse_config_text, parse_value, resolve_config
from oracles import inviscid_burgers_spectral


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_constant_kernel_value(tmp_path):
    status = main(["run", "constant_kernel", "--M0", "1", "--t", "2", "--s", "0", "--out", str(tmp_path)])
    assert status == 0
    rows = read_csv(tmp_path / "ghat.csv")
    assert list(rows[0]) == ["s_re", "s_im", "t", "g_re", "g_im"]
    assert len(rows) == 1
    assert float(rows[0]["s_re"]) == 0.0
    assert float(rows[0]["g_re"]) == pytest.approx(0.5, abs=1e-12)
    assert float(rows[0]["g_im"]) == 0.0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["experiment"] == "constant_kernel"
    assert manifest["params"]["M0"] == 1 and manifest["params"]["t"] == 2
    assert manifest["seed"] == 0
    assert "artifact_version" in manifest
    checks = json.loads((tmp_path / "checks.json").read_text())
    assert checks["all_passed"]


def test_list_table(capsys):
    assert main(["list"]) == 0
    first = capsys.readouterr().out
    lines = first.rstrip("\n").split("\n")
    assert lines[0].split("\t")[0] == "experiment"
    rows = [line.split("\t") for line in lines[1:]]
    assert len(rows) == 12
    assert {r[0] for r in rows} == set(EXPERIMENTS)
    assert all(len(r) == 5 and r[4].strip() for r in rows)
    assert main(["list"]) == 0
    assert capsys.readouterr().out == first == list_experiments()


def test_abbreviated_flags_are_parameters(tmp_path):
    # --s must set the s list, not abbreviate --seed
    assert main(["run", "constant_kernel", "--s", "1", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["params"]["s"] == 1
    assert len(read_csv(tmp_path / "ghat.csv")) == 1


def test_unknown_key_exits_2(tmp_path, capsys):
    assert main(["run", "constant_kernel", "--bogus", "1", "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert main(["run", "no_such_experiment"]) == 2
    assert main(["run", "constant_kernel", "--t", "abc", "--out", str(tmp_path)]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nexperiment = constant_kernel\nM0 = 2\nt = 1e0\nseed = 7\n")
    params, seed, _ = resolve_config("constant_kernel", cfg.read_text(), {"t": 3.0})
    assert params["M0"] == 2 and params["t"] == 3.0 and seed == 7
    out = tmp_path / "out"
    assert main(["run", "constant_kernel", "--config", str(cfg), "--t", "2", "--s", "0", "--out", str(out)]) == 0
    g = float(read_csv(out / "ghat.csv")[0]["g_re"])
    # M(t) = 2 M0 / (2 + t M0) with M0 = 2, t = 2
    assert g == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert json.loads((out / "manifest.json").read_text())["seed"] == 7
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign here\n")
    with pytest.raises(ConfigError):
        resolve_config("constant_kernel", "experiment = burgers\n")


def test_value_parsing():
    assert parse_value("3") == 3 and isinstance(parse_value("3"), int)
    assert parse_value("1e-3") == 1e-3
    assert parse_value("-.5") == -0.5
    assert parse_value("sin") == "sin"
    assert math.isinf(parse_value("inf"))


@pytest.mark.parametrize("name", ["constant_kernel", "burgers", "stochastic_burgers", "mergers"])
def test_rerun_byte_identical(tmp_path, name):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", name, "--seed", "3", "--out", str(a)]) == 0
    assert main(["run", name, "--seed", "3", "--out", str(b)]) == 0
    outputs = EXPERIMENTS[name].outputs.split()
    for fname in outputs:
        assert (a / fname).read_bytes() == (b / fname).read_bytes()
    assert (a / fname).read_bytes().count(b"\r") == 0


def test_burgers_matches_spectral_oracle(tmp_path):
    assert main(["run", "burgers", "--pi0", "sin", "--t", "0.5", "--x", "0.3", "--out", str(tmp_path)]) == 0
    u = float(read_csv(tmp_path / "values.csv")[0]["u"])
    # NOTE: the oracle solves u_t + u u_x = 0; the graph flow uses the same sign
    oracle = inviscid_burgers_spectral(np.sin, 0.5, np.array([0.3]))[0]
    assert abs(u - oracle) <= 1e-4


def test_spde_compare_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    status = main(["run", "spde_compare", "--seed", "42", "--out", str(a)])
    main(["run", "spde_compare", "--seed", "42", "--out", str(b)])
    for fname in ("field_direct.csv", "field_grassmann.csv", "diagnostics.json"):
        assert (a / fname).read_bytes() == (b / fname).read_bytes()
    diag = json.loads((a / "diagnostics.json").read_text())
    checks = {c["name"]: c for c in json.loads((a / "checks.json").read_text())["checks"]}
    assert checks["rerun_bit_identical"]["passed"]
    assert checks["rel_l2_gap"]["value"] == diag["rel_l2"]
    # exit status reflects the gap check honestly
    assert status == (0 if diag["rel_l2"] <= 0.05 and checks["gap_decreases_when_steps_double"]["passed"] else 1)


def test_spde_compare_printed_tolerance(tmp_path):
    # calibrated 5% gap for the default configuration; see the decisions
    # ledger for the seed study showing the direct scheme's error exceeds it
    main(["run", "spde_compare", "--seed", "42", "--out", str(tmp_path)])
    diag = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diag["rel_l2"] <= 0.05


def test_threads_variable_recorded(tmp_path):
    env_run = subprocess.run(
        [sys.executable, "-m", "grassflow", "run", "constant_kernel", "--out", str(tmp_path)],
        env={**os.environ, "GRASSFLOW_THREADS": "2"},
        capture_output=True,
        text=True,
    )
    assert env_run.returncode == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["threads"] == "2"
    assert "PASS" in env_run.stdout


def test_failed_check_exits_1_and_writes_checks(tmp_path):
    # a 2x2 mode grid at huge epsilon makes the direct scheme overflow
    status = main(["run", "spde_compare", "--n_modes", "2", "--epsilon", "1e300", "--out", str(tmp_path)])
    assert status == 1
    checks = json.loads((tmp_path / "checks.json").read_text())
    assert not checks["all_passed"]


@pytest.mark.parametrize("name", sorted(set(EXPERIMENTS) - {"spde_compare"}))
def test_every_experiment_emits_checks(tmp_path, name):
    assert main(["run", name, "--out", str(tmp_path)]) == 0
    checks = json.loads((tmp_path / "checks.json").read_text())
    assert checks["all_passed"] and len(checks["checks"]) >= 1
    for fname in EXPERIMENTS[name].outputs.split():
        assert (tmp_path / fname).exists()
