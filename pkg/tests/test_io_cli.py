import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayembed.cli import EXIT, main
from delayembed.io import (SchemaError, dumps, load_orbit, load_signal, read_json, read_samples_csv, save_orbit,
                           save_signal, signal_from_csv, write_csv, write_json)
from delayembed.signal import PeriodicSignal, trig_signal

from conftest import random_trig


@pytest.fixture
def sine_file(tmp_path, sine):
    return str(save_signal(tmp_path / "sine.json", sine))


@pytest.fixture
def folded_file(tmp_path, folded_sine):
    return str(save_signal(tmp_path / "folded.json", folded_sine))


def manifest(out):
    return read_json(out / "manifest.json", "manifest")


# -------------------------------------------------------------------- io


def test_dumps_formats():
    s = dumps({"a": 1, "b": 0.1, "c": [1.0, -0.0], "d": float("inf"), "e": None, "f": np.float64(2.0)})
    d = json.loads(s)
    assert d == {"a": 1, "b": 0.1, "c": [1.0, 0.0], "d": None, "e": None, "f": 2.0}
    assert s == dumps(json.loads(s))


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), max_size=20))
def test_float_round_trip(xs):
    assert json.loads(dumps(xs)) == [x + 0.0 for x in xs]


def test_schema_checks(tmp_path):
    p = write_json(tmp_path / "x.json", {"v": 1}, "orbit")
    assert read_json(p)["schema"] == "delayembed.orbit/1"
    with pytest.raises(SchemaError):
        read_json(p, "signal")
    write_json(p, {"schema": "delayembed.orbit/99"})
    with pytest.raises(SchemaError):
        read_json(p, "orbit")


@given(st.integers(0, 2**32 - 1))
def test_signal_file_round_trip(seed):
    o = random_trig(np.random.default_rng(seed), 4, period=1.7)
    with tempfile.TemporaryDirectory() as d:
        back = load_signal(save_signal(Path(d) / "s.json", o))
    np.testing.assert_array_equal(back.cos, o.cos)
    np.testing.assert_array_equal(back.sin, o.sin)
    assert back.period == o.period


def test_orbit_file_round_trip(tmp_path, unit_circle):
    back = load_orbit(save_orbit(tmp_path / "o.json", unit_circle))
    t = np.linspace(0, 7, 21)
    np.testing.assert_array_equal(back(t), unit_circle(t))


def test_csv_ingestion(tmp_path):
    n = 64
    t = np.arange(n) / n * 2.0
    v = np.sin(2 * math.pi * t / 2.0) + 0.5 * np.cos(3 * math.pi * t)
    write_csv(tmp_path / "tv.csv", ["t", "value"], zip(t, v))
    o = signal_from_csv(tmp_path / "tv.csv", n_modes=5)
    assert o.period == pytest.approx(2.0)
    np.testing.assert_allclose(o(t), v, atol=1e-12)
    write_csv(tmp_path / "v.csv", ["value"], [[x] for x in v])
    assert signal_from_csv(tmp_path / "v.csv", period=2.0, n_modes=5)(0.3) == pytest.approx(o(0.3), abs=1e-12)
    with pytest.raises(ValueError):
        signal_from_csv(tmp_path / "v.csv")
    (tmp_path / "bad.csv").write_text("t,value\n0,1\n0.1,2\n0.3,3\n")
    with pytest.raises(ValueError):
        read_samples_csv(tmp_path / "bad.csv")
    (tmp_path / "hdr.csv").write_text("time,val\n0,1\n")
    with pytest.raises(ValueError):
        read_samples_csv(tmp_path / "hdr.csv")


# ------------------------------------------------------------------- cli


def test_cli_certify_exit_codes(tmp_path, sine_file, folded_file, capsys):
    assert main(["certify", "--signal", sine_file, "--tau", "0.125", "--out", str(tmp_path / "a")]) == 0
    assert "verdict: certified" in capsys.readouterr().out
    assert main(["certify", "--signal", folded_file, "--tau", "0.05", "--out", str(tmp_path / "b")]) == EXIT["refuted"]
    m = manifest(tmp_path / "b")
    assert m["status"] == "failed" and m["exit_code"] == 3
    irregular = save_signal(tmp_path / "irr.json", trig_signal(1.0, [0, 0, 0, 0], [0, 0.75, 0, -0.25]))
    assert main(["certify", "--signal", str(irregular), "--tau", "0.01",
                 "--out", str(tmp_path / "c")]) == EXIT["inconclusive"]


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["certify", "--signal", str(tmp_path / "missing.json"), "--tau", "0.1",
                 "--out", str(tmp_path)]) == EXIT["usage"]
    assert manifest(tmp_path)["failure"]["stage"] == "input"
    assert main(["certify", "--tau", "0.1", "--out", str(tmp_path)]) == EXIT["usage"]
    with pytest.raises(SystemExit) as info:
        main(["certify", "--signal", "x.json", "--tau", "-1"])
    assert info.value.code == 2


def test_cli_certify_manifest_and_auto_tau(tmp_path, sine_file):
    out = tmp_path / "run"
    assert main(["certify", "--signal", sine_file, "--tau", "auto", "--curve", "curve.csv",
                 "--out", str(out)]) == 0
    m = manifest(out)
    assert m["schema"] == "delayembed.manifest/1"
    assert m["tool"] == "delayembed" and m["command"] == "certify"
    assert m["parameters"]["tau"] == "auto"
    assert m["parameters"]["tau_effective"] == pytest.approx(0.5 / 24)
    assert set(m["artifacts"]) >= {"certificate", "profile", "curve"}
    cert = read_json(out / "certificate.json", "certificate")
    assert cert["verdict"] == "certified" and cert["tau"] == pytest.approx(0.5 / 24)
    rows = (out / "curve.csv").read_text().splitlines()
    assert rows[0] == "t,x,y,z" and len(rows) == 1025


def test_cli_csv_input(tmp_path):
    n = 128
    t = np.arange(n) / n
    write_csv(tmp_path / "s.csv", ["t", "value"], zip(t, np.sin(2 * math.pi * t)))
    assert main(["certify", "--samples", str(tmp_path / "s.csv"), "--modes", "3", "--tau", "0.1",
                 "--out", str(tmp_path / "o")]) == 0


def test_cli_outputs_are_deterministic(tmp_path, sine_file):
    out = tmp_path / "det"
    args = ["certify", "--signal", sine_file, "--tau", "0.1", "--curve", "c.csv", "--out", str(out)]
    assert main(args) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(args) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second


def test_cli_repair(tmp_path, folded_file):
    out = tmp_path / "rep"
    assert main(["repair", "--signal", folded_file, "--tau", "0.08", "--seed", "3", "--max-iters", "50",
                 "--out", str(out)]) == 0
    o = load_signal(out / "repaired_signal.json")
    assert isinstance(o, PeriodicSignal)
    assert read_json(out / "certificate.json")["verdict"] == "certified"
    assert main(["repair", "--signal", folded_file, "--tau", "0.05", "--max-iters", "1",
                 "--out", str(tmp_path / "fail")]) == EXIT["repair"]
    assert manifest(tmp_path / "fail")["failure"]["stage"] == "repair"


def test_cli_find_orbit_surgery_eval(tmp_path, capsys):
    out = tmp_path / "orb"
    assert main(["find-orbit", "--field", "hopf3d", "--x0", "1.1,0,0.05", "--period-guess", "6",
                 "--out", str(out)]) == 0
    fl = read_json(out / "floquet.json", "floquet")
    assert fl["period"] == pytest.approx(2 * math.pi, abs=1e-8)
    assert fl["hyperbolic"]
    orbit = load_orbit(out / "orbit.json")
    o = orbit.project([1.0, 0.0, 0.0])
    save_signal(out / "rep.json", o + trig_signal(orbit.period, [0, 0, 0], [0, 0, 1e-3]))
    assert main(["surgery", "--field", "hopf3d", "--orbit", str(out / "orbit.json"), "--repaired",
                 str(out / "rep.json"), "--a", "1,0,0", "--out", str(out)]) == 0
    rep = read_json(out / "surgery_report.json", "surgery-report")
    assert rep["passed"] and rep["exterior_max"] == 0.0
    write_csv(out / "pts.csv", ["x0", "x1", "x2"], [[1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert main(["eval-field", "--field-manifest", str(out / "perturbed_field.json"), "--points",
                 str(out / "pts.csv"), "--out", str(out)]) == 0
    vals = np.loadtxt(out / "field_values.csv", delimiter=",", skiprows=1)
    # far from the orbit f' equals the Hopf field exactly
    np.testing.assert_array_equal(vals[1, 3:6], [3 * (1 - 9), 3.0, 0.0])
    np.testing.assert_array_equal(vals[2, 6:], 0.0)
    assert main(["surgery", "--field", "hopf3d", "--orbit", str(out / "orbit.json"), "--repaired",
                 str(out / "rep.json"), "--a", "1,0", "--out", str(out)]) == EXIT["usage"]


def test_cli_find_orbit_failure(tmp_path):
    assert main(["find-orbit", "--field", "linear", "--matrix", "1,0,0,0,1,0,0,0,1", "--x0", "1,1,0",
                 "--period-guess", "1", "--out", str(tmp_path)]) == EXIT["orbit"]
    assert manifest(tmp_path)["failure"]["stage"] == "find-orbit"


@pytest.mark.parametrize("a", ["0,0,1", "1,0,0"])
def test_cli_pipeline_hopf(tmp_path, a):
    out = tmp_path / "pipe"
    assert main(["pipeline", "--field", "hopf3d", "--x0", "1.1,0,0.05", "--period-guess", "6",
                 "--a", a, "--tau", "auto", "--exterior-points", "500", "--out", str(out)]) == 0
    m = manifest(out)
    assert m["status"] == "ok"
    assert {"orbit", "floquet", "repaired_signal", "perturbed-field", "surgery-report",
            "certificate"} <= set(m["artifacts"])
    # z is identically zero on the cycle and has to be regularized first
    assert ("regularized_signal" in m["artifacts"]) == (a == "0,0,1")
    rep = read_json(out / "surgery_report.json")
    assert all(rep["checks"].values())
    assert read_json(out / "certificate.json")["verdict"] == "certified"
