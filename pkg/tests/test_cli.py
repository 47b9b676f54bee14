import csv

import numpy as np
import pytest

from convint.cli import SPECS, resolve_config, run_cli
from convint.errors import ConfigError
from convint.fieldio import load_snapshot


def cli(tmp_path, *args, sub="out"):
    out = tmp_path / sub
    code = run_cli([*args, f"out={out}"])
    return code, out


def summary(out):
    lines = (out / "summary.txt").read_text().splitlines()
    return dict(ln.split("=", 1) for ln in lines if "=" in ln and not ln.startswith("#"))


def _stable(text):
    # drop the timestamp header and the output directory
    return [ln for ln in text.splitlines()[1:] if not ln.startswith("config.out=")]


def test_verify_schedule_example(tmp_path, capsys):
    code, out = cli(tmp_path, "verify-schedule", "N=4", "K=4", "sigma=2", "gamma=0.01")
    assert code == 0
    text = capsys.readouterr().out
    assert "lambda_growth" in text and "r=5/8 alpha=4/9 gamma_max=1/30" in text
    rows = list(csv.DictReader(open(out / "conditions.csv")))
    assert rows and all(r["pass"] == "True" for r in rows)
    sched = list(csv.DictReader(open(out / "schedule.csv")))
    assert [r["lam_exp"] for r in sched] == ["1", "7", "16", "28"]
    assert [r["mu_exp"] for r in sched] == ["5", "13", "26", "32"]
    s = summary(out)
    assert s["passed"] == "True" and s["config.sigma0"] == "1.0" and s["config.mu0"] == "1.0"


def test_verify_schedule_failure_exit(tmp_path, capsys):
    code, _ = cli(tmp_path, "verify-schedule", "N=4", "K=4", "sigma=2", "gamma=0.05",
                  "sigma0=1.7411011265922482")
    assert code == 1
    assert "lambda_growth[k=3]" in capsys.readouterr().err


def test_simulate_bounds_example(tmp_path, capsys):
    code, out = cli(tmp_path, "simulate-bounds", "N=4", "K=4")
    assert code == 0
    text = capsys.readouterr().out
    assert "decay exponent: 32" in text and "growth exponent: 20" in text
    s = summary(out)
    assert s["decay_exponent"] == "32" and s["growth_exponent"] == "20"
    assert len(list(csv.DictReader(open(out / "ledger.csv")))) == 5


def test_missing_key_names_it(tmp_path, capsys):
    code, _ = cli(tmp_path, "verify-schedule", "N=4", "K=4", "gamma=0.01")
    assert code == 2
    assert "sigma" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["simulate-bounds", "N=4", "K=4", "bogus=1"],
                                  ["simulate-bounds", "N=four", "K=4"],
                                  ["simulate-bounds", "N=4", "K=4", "nonsense"],
                                  ["simulate-bounds", "N=3", "K=4"],
                                  ["no-such-command"]])
def test_configuration_errors(tmp_path, args):
    assert cli(tmp_path, *args)[0] == 2


def test_config_file_and_override(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("# schedule check\nN=4\nK=4  # stages\nsigma=2\ngamma=0.5\n")
    code, out = cli(tmp_path, "verify-schedule", f"config={p}", "gamma=0.01")
    assert code == 0
    assert summary(out)["config.gamma"] == "0.01"
    with pytest.raises(ConfigError):
        resolve_config("run", {"config": str(tmp_path / "missing.txt")})


def test_defaults_resolved_in_summary(tmp_path):
    code, out = cli(tmp_path, "simulate-bounds", "N=4", "K=4")
    s = summary(out)
    for key in SPECS["simulate-bounds"]:
        assert f"config.{key}" in s


def test_run_stage_outputs_are_deterministic(tmp_path):
    args = ["run-stage", "grid=periodic", "n=128"]
    c1, o1 = cli(tmp_path, *args, sub="a")
    c2, o2 = cli(tmp_path, *args, sub="b")
    assert c1 == c2 == 0
    for name in ("steps.csv", "stage_fields.csv"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()
    s1, s2 = (o1 / "summary.txt").read_text(), (o2 / "summary.txt").read_text()
    assert _stable(s1) == _stable(s2)
    row = next(csv.DictReader(open(o1 / "steps.csv")))
    assert float(row["bookkeeping_relative"]) <= 1e-8


def test_run_stage_strict_exit_codes(tmp_path, capsys):
    base = ["run-stage", "n=96", "margin=1.2", "mode=strict", "N=4", "K=4", "l=0.5", "lam=4"]
    assert cli(tmp_path, *base)[0] == 1
    assert cli(tmp_path, *base, "sigma0=1")[0] == 3
    assert "ResolutionError" in capsys.readouterr().err


def test_export_mesh_from_snapshot(tmp_path):
    code, o = cli(tmp_path, "run-stage", "grid=periodic", "n=32", "mu0=1", "r1=2", "r2=2",
                  sub="stage")
    assert code == 0
    g, fields, _ = load_snapshot(o / "stage_fields.csv")
    code, out = cli(tmp_path, "export-mesh", f"snapshot={o / 'stage_fields.csv'}", "component=2",
                    "stride=2")
    assert code == 0
    lines = (out / "mesh.obj").read_text().splitlines()
    verts = [ln for ln in lines if ln.startswith("v ")]
    faces = [ln for ln in lines if ln.startswith("f ")]
    assert len(verts) == 16 * 16 and len(faces) == 2 * 15 * 15
    z = np.array([float(ln.split()[3]) for ln in verts])
    assert np.allclose(np.sort(z), np.sort(fields["v"][1].values[::2, ::2].ravel()))
    assert cli(tmp_path, "export-mesh", f"snapshot={o / 'stage_fields.csv'}", "field=q")[0] == 2


def test_self_test(tmp_path, capsys):
    assert cli(tmp_path, "self-test")[0] == 0
    assert "FAILED" not in capsys.readouterr().out
