import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mckit import cli
from mckit.cir import PassiveUca
from mckit.physics import PointSource, point_source_concentration
from mckit.scenarios import BUILTINS, builtin, list_scenarios

REQUIRED = ["fig-diffusion", "fig-advection", "fig-dispersion", "fig-reaction", "fig-rmse",
            "fig-duct-vs-unbounded", "fig-rho-t", "fig-rho-tau", "dumbbell"]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def run(tmp_path, *argv):
    out = tmp_path / "out.csv"
    code = cli.main(["run", *argv, "-o", str(out)])
    return code, out


# Catalog -----------------------------------------------------------------------------

def test_catalog_contents(capsys):
    assert set(REQUIRED) <= set(list_scenarios())
    assert cli.main(["list"]) == 0
    listed = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert listed == list_scenarios()


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_every_builtin_validates(name):
    cfg = cli.validate(builtin(name))
    assert cfg["kind"] in cli.SCHEMAS


def test_dumbbell_default_pipe():
    assert 60e-6 in builtin("dumbbell")["params"]["pipe_length"]


# Validation ---------------------------------------------------------------------------

def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = builtin("fig-diffusion")
    cfg["params"]["diffusoin"] = 1e-10
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    code, out = run(tmp_path, str(path))
    assert code == 2
    assert "diffusoin" in capsys.readouterr().err
    assert not out.exists()


@pytest.mark.parametrize("mutate, where", [
    (lambda c: c["time"].update(nope=1), "nope"),
    (lambda c: c.update(kind="bogus"), "kind"),
    (lambda c: c.update(extra=1), "extra"),
    (lambda c: c["time"].update(spacing="cubic"), "spacing"),
    (lambda c: c["time"].update(points=0), "points"),
])
def test_validation_errors_name_location(mutate, where):
    cfg = builtin("fig-diffusion")
    mutate(cfg)
    with pytest.raises(cli.ConfigError) as err:
        cli.validate(cfg)
    assert where in str(err.value)


def test_bad_value_type_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "fig-diffusion", "--set", 'params.D="fast"')
    assert code == 2
    assert "params.D" in capsys.readouterr().err


def test_numeric_error_exit_code(tmp_path, capsys):
    code, out = run(tmp_path, "fig-diffusion", "--set", "params.D=-1")
    assert code == 3
    assert capsys.readouterr().err.startswith("error:")
    assert not out.exists()


def test_missing_config(tmp_path):
    code, _ = run(tmp_path, str(tmp_path / "missing.json"))
    assert code == 2


# Time grid and overrides -----------------------------------------------------------------

def test_time_grid_spacing():
    lin = cli.time_grid({"t_start": 0.0, "t_end": 1.0, "points": 5, "spacing": "linear"})
    log = cli.time_grid({"t_start": 1e-3, "t_end": 1.0, "points": 4, "spacing": "log"})
    assert np.allclose(lin, [0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(log, [1e-3, 1e-2, 1e-1, 1.0])


def test_override_parses_json_values():
    cfg = builtin("fig-diffusion")
    cli.apply_override(cfg, "params.d=[1e-7, 2e-7]")
    cli.apply_override(cfg, "time.points=7")
    assert cfg["params"]["d"] == [1e-7, 2e-7]
    assert cfg["time"]["points"] == 7
    with pytest.raises(cli.ConfigError):
        cli.apply_override(cfg, "no-equals-sign")


def test_echo_config_round_trip(capsys):
    assert cli.main(["echo-config", "fig-rho-tau"]) == 0
    echoed = json.loads(capsys.readouterr().out)
    assert cli.validate(echoed) == echoed
    assert echoed["params"]["d0"] == builtin("fig-rho-tau")["params"]["d0"]


def test_seed_flag(tmp_path, capsys):
    assert cli.main(["echo-config", "fig-rho-t", "--set", "seed=99"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 99


# Outputs ----------------------------------------------------------------------------------

def test_fig_diffusion_columns(tmp_path):
    code, out = run(tmp_path, "fig-diffusion")
    assert code == 0
    header, data = read_csv(out)
    assert header == ["t_seconds", "c_300nm", "c_400nm", "c_500nm"]
    t = data[:, 0]
    expected = point_source_concentration(PointSource(1e4), 4.5e-10, [400e-9, 0.0, 0.0], t)
    assert np.allclose(data[:, 2], expected, rtol=1e-8)


def test_float_format(tmp_path):
    _, out = run(tmp_path, "fig-diffusion", "--set", "time.points=3")
    body = out.read_text().splitlines()[1]
    for field in body.split(","):
        mantissa, exponent = field.split("e")
        assert len(mantissa.replace("-", "").replace(".", "")) == 9
        assert exponent[0] in "+-"


def test_rmse_columns(tmp_path):
    code, out = run(tmp_path, "fig-rmse", "--set", "params.points=5")
    assert code == 0
    header, data = read_csv(out)
    assert header[0] == "h"
    for n in (100, 1000, 10000, 100000):
        assert f"rmse_gauss_{n}" in header and f"rmse_poisson_{n}" in header
    assert data.shape == (5, 9)
    assert data[0, 0] == pytest.approx(1e-3) and data[-1, 0] == pytest.approx(0.5)


def test_cir_kind_matches_library(tmp_path):
    cfg = {
        "kind": "cir",
        "params": {"models": [{"label": "uca", "model": "passive_uca",
                                "params": {"d0": 200e-9, "D": 1e-11, "V_rx": 5e-22}}]},
        "time": {"t_start": 1e-4, "t_end": 1e-2, "points": 9, "spacing": "log"},
    }
    path = tmp_path / "cir.json"
    path.write_text(json.dumps(cfg))
    code, out = run(tmp_path, str(path))
    assert code == 0
    header, data = read_csv(out)
    assert header[0] == "t_seconds"
    assert np.allclose(data[:, 1], PassiveUca(200e-9, 1e-11, 5e-22).h(data[:, 0]), rtol=1e-8)


def test_seed_changes_monte_carlo(tmp_path):
    base = ["fig-rho-tau", "--set", "time.points=3", "--set", "realizations=200"]
    _, a = run(tmp_path, *base, "--seed", "1")
    first = a.read_bytes()
    _, b = run(tmp_path, *base, "--seed", "2")
    assert first != b.read_bytes()


def test_byte_identical_reruns(tmp_path):
    argv = ["fig-rho-tau", "--set", "time.points=4", "--set", "realizations=500"]
    _, out = run(tmp_path, *argv)
    first = out.read_bytes()
    _, out = run(tmp_path, *argv)
    assert out.read_bytes() == first


def test_write_is_atomic(tmp_path, monkeypatch):
    target = tmp_path / "table.csv"
    target.write_text("old\n")

    def boom(x):
        raise RuntimeError("disk full")

    monkeypatch.setattr(cli, "format_value", boom)
    with pytest.raises(RuntimeError):
        cli.write_csv(target, ["a"], [[1.0]])
    assert target.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["table.csv"]


def test_console_entry_point(tmp_path):
    out = tmp_path / "x.csv"
    proc = subprocess.run([sys.executable, "-m", "mckit.cli", "run", "fig-diffusion", "-o", str(out),
                           "--set", "time.points=2"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith("t_seconds,")
