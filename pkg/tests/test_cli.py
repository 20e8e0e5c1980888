import json

import pytest

from nlkg_lab import cli
from nlkg_lab.errors import ConvergenceError


def run(tmp_path, *args, name="out"):
    return cli.main(["--output-dir", str(tmp_path / name), *args])


def test_boundstate_defaults(tmp_path):
    assert run(tmp_path, "boundstate") == 0
    out = json.loads((tmp_path / "out" / "boundstate.json").read_text())
    assert out["action_W"] == pytest.approx(4.0 / 3.0, abs=1e-8)
    assert (tmp_path / "out" / "boundstate.csv").read_text().startswith("x,q\n")
    assert json.loads((tmp_path / "out" / "defaults.json").read_text()) == cli.load_defaults()


def test_unknown_key_is_rejected(tmp_path, capsys):
    assert run(tmp_path, "--set", "grid.bogus=1", "boundstate") == 2
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"shooting": {"nope": 1}}))
    assert run(tmp_path, "--config", str(cfg), "boundstate") == 2
    assert "unknown configuration key" in capsys.readouterr().err


@pytest.mark.parametrize("override", ["nonlinearity.p=1.0", "evolution.scheme=\"euler\"", "evolution.dt=1.0",
                                      "evolution.beta=1.5", "shooting.betas=[0.2,0.2]", "grid.n_points=-4"])
def test_invalid_values_exit_with_status_two(tmp_path, override):
    assert run(tmp_path, "--set", override, "boundstate") == 2


def test_numerical_failure_writes_diagnostic(tmp_path, monkeypatch):
    def boom(cfg, args):
        raise ConvergenceError("Newton stalled")

    monkeypatch.setitem(cli.COMMANDS, "boundstate", boom)
    assert run(tmp_path, "boundstate") == 3
    fail = json.loads((tmp_path / "out" / "failure.json").read_text())
    assert fail["error"] == "ConvergenceError"


def test_environment_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.main(["boundstate"]) == 0
    assert (tmp_path / "env" / "boundstate.json").exists()


def test_evolve_outputs_are_byte_identical(tmp_path):
    args = ["evolve", "--t1", "1", "--snap-every", "0.5"]
    assert run(tmp_path, *args, name="a") == 0
    assert run(tmp_path, *args, name="b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "diagnostics.csv" in names and "snapshot_0002.csv" in names
    for n in names:
        if n != "config.json":
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n
    rows = (tmp_path / "a" / "diagnostics.csv").read_text().splitlines()
    assert rows[0] == "t,E,P,norm" and len(rows) == 4


def test_spectrum_and_coercivity_rows(tmp_path):
    assert run(tmp_path, "--set", "spectral.betas=[0.0,0.5]", "spectrum") == 0
    rows = json.loads((tmp_path / "out" / "spectrum.json").read_text())
    assert [r["mbar"] for r in rows] == [1, 1]
    assert rows[0]["lambdas"][0] == pytest.approx(3 ** 0.5, abs=1e-9)
    assert run(tmp_path, "--set", "spectral.betas=[0.4]", "--set", "grid.half_width=25", "coercivity") == 0
    row = json.loads((tmp_path / "out" / "coercivity.json").read_text())[0]
    assert row["c_H"] == pytest.approx(0.35864, abs=2e-5)
    assert row["pass"] is True


def test_shoot_writes_certificate(tmp_path):
    assert run(tmp_path, "shoot") == 0
    cert = json.loads((tmp_path / "out" / "certificate.json").read_text())
    assert cert["status"] == "inside"
    assert cert["S_star"] == pytest.approx(cert["T0"])
    assert cert["sup_weighted_defect"] <= 1.0
    header = (tmp_path / "out" / "diagnostics.csv").read_text().splitlines()[0]
    assert header == "t,normW,b_norm,a_plus_norm,a_minus_norm,F,defect,e_omega_t_defect"
    assert run(tmp_path, "shoot", "--n-solitons", "3", "--betas", "-0.3,0.3", name="bad") == 2
