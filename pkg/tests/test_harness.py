import json

import pytest

from limitquant import _kernels
from limitquant.cli import main
from limitquant.harness import run, write_csv


def _read(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.suffix == ".csv"}


def test_write_csv_format(tmp_path):
    write_csv(tmp_path / "t.csv", ("a", "b"), [(1.0, "x"), (0.25, "y")], {"z": 1, "a": "q"})
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines == ["# meta: a=q", "# meta: z=1", "a,b", "1.000000000000e+00,x", "2.500000000000e-01,y"]


def test_report_and_files(tmp_path):
    rep = run("quartic-wkb", tmp_path)
    assert rep.passed and rep.exit_code == 0
    assert {p.name for p in tmp_path.iterdir()} == {"wkb_gap.csv", "report.txt", "report.json"}
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["hash"] == rep.scenario_hash
    assert data["checks"][0]["passed"]
    head = (tmp_path / "wkb_gap.csv").read_text().splitlines()
    assert f"# meta: scenario_hash={rep.scenario_hash}" in head
    assert "hbar,n,convention,exact,wkb,gap" in head


@pytest.mark.parametrize("name", ["sphere-direct", "quartic-wkb", "decoupling-smooth"])
def test_deterministic_across_runs_and_threads(tmp_path, name):
    run(name, tmp_path / "a")
    run(name, tmp_path / "b")
    run(name, tmp_path / "c", threads=4)
    a = _read(tmp_path / "a")
    assert a and a == _read(tmp_path / "b") == _read(tmp_path / "c")


def test_numpy_backend_reproduces_numba(tmp_path, monkeypatch):
    if not _kernels._HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setenv(_kernels.ENV_FLAG, "0")
    a = run("harmonic-ramp", tmp_path / "nb")
    monkeypatch.setenv(_kernels.ENV_FLAG, "1")
    b = run("harmonic-ramp", tmp_path / "np")
    assert a.passed and b.passed
    for ca, cb in zip(a.checks, b.checks):
        assert ca.name == cb.name
        # drifts near 1e-9 are differences of O(1) actions, so roundoff alone moves them ~1e-6 relative
        assert ca.value == pytest.approx(cb.value, rel=1e-5, abs=1e-12)


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "sphere-direct", "--out", str(tmp_path / "ok")]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["run", "coarse-grid", "--out", str(tmp_path / "bad")]) == 1
    assert "FAIL" in capsys.readouterr().out
    bad = tmp_path / "bad.toml"
    bad.write_text('lambda = [1e3, 1e4]\n[scenario]\nexperiment = "limit-spectrum"\n')
    assert main(["run", str(bad)]) == 2
    assert "need >= 3" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 2


def test_cli_list_and_validate(capsys):
    assert main(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert "circle-limit" in out and "harmonic-ramp" in out
    assert main(["validate", "circle-limit"]) == 0
    out = capsys.readouterr().out
    assert "* grid.order = 4" in out
    assert "  lambda = " in out
    assert "hash" in out
