"""Command-line behaviour: argument parsing, every subcommand, exit codes."""

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bjjsim import cli


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# parse_range

@given(st.integers(-50, 50), st.integers(0, 40), st.integers(1, 20))
def test_parse_range_colon_form(a, count, step):
    start, s = a / 10, step / 10
    stop = start + count * s
    vals = cli.parse_range(f"{start}:{stop}:{s}")
    assert len(vals) == count + 1
    assert vals[0] == pytest.approx(start)
    assert vals[-1] == pytest.approx(stop)
    np.testing.assert_allclose(np.diff(vals), s, rtol=1e-9, atol=1e-12)


@given(st.integers(1, 30), st.integers(0, 12))
def test_parse_range_dotted_form_uses_default_step(a, count):
    vals = cli.parse_range(f"{a}..{a + 10 * count}", default_step=10.0)
    assert vals.tolist() == [a + 10.0 * k for k in range(count + 1)]


def test_parse_range_other_forms():
    assert cli.parse_range("10..30..5").tolist() == [10, 15, 20, 25, 30]
    assert cli.parse_range("0.5, 0.6").tolist() == [0.5, 0.6]
    assert cli.parse_range("7").tolist() == [7.0]
    # the step need not divide the span
    assert cli.parse_range("0:1:0.3").tolist() == pytest.approx([0, 0.3, 0.6, 0.9])


@pytest.mark.parametrize("text", ["1:0:0.1", "0:1:0", "0:1:-1", "a:b:c", "1:2:3:4", "10..80", "x"])
def test_parse_range_rejects(text):
    with pytest.raises(cli.UsageError):
        cli.parse_range(text)


# ---------------------------------------------------------------------------
# subcommands

def test_potential_sweep(tmp_path):
    out = tmp_path / "sweep.csv"
    assert cli.main(["potential", "sweep", "--i2", "1.6:2.6:0.5", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["i2_mA", "vb_Hz", "fx_Hz", "fy_Hz", "fz_Hz", "x0_um", "tilt_Hz"]
    assert [float(r["i2_mA"]) for r in rows] == [1.6, 2.1, 2.6]
    # single well at low current, barrier and separated minima at high current
    assert float(rows[0]["vb_Hz"]) == 0 and float(rows[-1]["vb_Hz"]) > 0
    assert float(rows[-1]["x0_um"]) > 0


def test_potential_sweep_with_layout_file(tmp_path):
    from bjjsim import potential

    layout = tmp_path / "chip.yaml"
    layout.write_text(potential.default_layout_path().read_text())
    out = tmp_path / "sweep.csv"
    assert cli.main(["potential", "sweep", "--layout", str(layout), "--i2", "2.6", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 1


def test_gpe_params(tmp_path):
    out = tmp_path / "gpe.csv"
    code = cli.main(["gpe", "params", "--potential", "quartic", "--vb-hz", "2690", "--x0-um", "3.8",
                     "--n", "6000", "--out", str(out)])
    assert code == 0
    (row,) = read_csv(out)
    assert list(row) == ["vb_Hz", "ec_Hz", "ej_Hz", "mu_Hz", "n"]
    assert float(row["vb_Hz"]) == 2690 and int(row["n"]) == 6000
    ec, ej, mu = float(row["ec_Hz"]), float(row["ej_Hz"]), float(row["mu_Hz"])
    assert ec > 0 and ej > 0 and mu > 0
    # a high barrier: well below mu and Josephson-regime ordering
    assert ej > ec


def _ramp_csv(path):
    with open(path, "w") as fh:
        fh.write("vb_Hz,ec_Hz,ej_Hz,mu_Hz,n\n")
        for ec, ej in [(20.0, 400.0), (10.0, 40.0), (5.0, 0.5)]:
            fh.write(f"0,{ec},{ej},0,40\n")


def test_tmm_evolve(tmp_path):
    ramp, out = tmp_path / "ramp.csv", tmp_path / "tmm.csv"
    _ramp_csv(ramp)
    code = cli.main(["tmm", "evolve", "--params", str(ramp), "--n", "40", "--ti-nk", "5",
                     "--tau-r-ms", "0..20", "--dt-us", "20", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["tau_r_ms", "xi2", "xi2_db", "coherence", "gain_db"]
    assert [float(r["tau_r_ms"]) for r in rows] == [0, 10, 20]
    for r in rows:
        xi2 = float(r["xi2"])
        assert xi2 > 0
        assert float(r["xi2_db"]) == pytest.approx(10 * math.log10(xi2), abs=1e-6)
        assert abs(float(r["coherence"])) <= 1


def test_tmm_evolve_rejects_bad_table(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert cli.main(["tmm", "evolve", "--params", str(bad), "--out", str(tmp_path / "o.csv")]) == 2


def test_cfield_curve(tmp_path):
    out = tmp_path / "curve.csv"
    code = cli.main(["cfield", "curve", "--potential", "quartic", "--vb-hz", "2690", "--x0-um", "3.8",
                     "--n", "300", "--t-over-tc", "0.5:1.0:0.5", "--sweeps", "800", "--burn-in", "200",
                     "--seed", "7", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["t_over_tc", "xi2", "xi2_err", "n2m_frac", "xi2_tmm_ext", "validity_flag"]
    assert [float(r["t_over_tc"]) for r in rows] == [0.5, 1.0]
    for r in rows:
        assert float(r["xi2"]) > 0 and float(r["xi2_err"]) >= 0
        assert 0 < float(r["n2m_frac"]) <= 1
        assert r["validity_flag"] in ("0", "1")


def test_stats_synth_and_estimate(tmp_path):
    shots, summary = tmp_path / "shots.csv", tmp_path / "summary.jsonl"
    noise = tmp_path / "noise.yaml"
    noise.write_text("q: 0.84\ntau_s: 5.0e-5\n")
    assert cli.main(["stats", "synth", "--dist", "binomial", "--n", "1300", "--fl", "0.5", "--shots", "10000",
                     "--seed", "3", "--noise-model", str(noise), "--out", str(shots)]) == 0
    for seed in (1, 2):
        assert cli.main(["stats", "estimate", "--in", str(shots), "--bootstrap", "1000", "--seed", str(seed),
                         "--out", str(summary)]) == 0
    lines = summary.read_text().splitlines()
    assert len(lines) == 2  # appended, not overwritten
    a, b = (json.loads(x) for x in lines)
    assert a["xi2"] == b["xi2"]  # the point estimate ignores the bootstrap seed
    assert a["n_shots"] == 10000 and a["bootstrap"] == 1000
    assert a["ci_low"] <= a["xi2"] <= a["ci_high"]
    assert abs(a["xi2"] - 1) < 0.1  # about 4 standard errors at 1e4 shots


def test_stats_synth_deterministic(tmp_path):
    paths = [tmp_path / f"{k}.csv" for k in range(2)]
    for p in paths:
        assert cli.main(["stats", "synth", "--n", "100", "--shots", "50", "--seed", "9", "--out", str(p)]) == 0
    assert paths[0].read_text() == paths[1].read_text()


def test_stats_synth_gaussian_needs_n2(tmp_path, capsys):
    assert cli.main(["stats", "synth", "--dist", "gaussian", "--out", str(tmp_path / "g.csv")]) == 2
    assert "--n2" in capsys.readouterr().err


def test_stats_estimate_to_stdout(tmp_path, capsys):
    shots = tmp_path / "shots.csv"
    cli.main(["stats", "synth", "--n", "200", "--shots", "300", "--no-noise", "--out", str(shots)])
    capsys.readouterr()
    assert cli.main(["stats", "estimate", "--in", str(shots), "--bootstrap", "1000"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["n_shots"] == 300


# ---------------------------------------------------------------------------
# exit codes

def test_scenario_exit_zero_and_one(tmp_path):
    good = tmp_path / "good.yaml"
    good.write_text("scenario: fig1c\nfig1c:\n  i2_mA: [1.6, 2.6, 3.0]\n")
    assert cli.main(["fig1c", "--config", str(good), "--out", str(tmp_path / "a")]) == 0
    # never splits: the "ends as a double well" check fails
    bad = tmp_path / "bad.yaml"
    bad.write_text("scenario: fig1c\nfig1c:\n  i2_mA: [1.6, 1.7]\n")
    assert cli.main(["fig1c", "--config", str(bad), "--out", str(tmp_path / "b")]) == 1
    assert (tmp_path / "b" / "summary.json").exists()


@pytest.mark.parametrize("argv", [
    ["fig1c", "--config", "/nonexistent.yaml"],
    ["stats", "estimate", "--in", "/nonexistent.csv"],
    ["gpe", "params", "--vb-hz", "-5", "--x0-um", "3.8"],
])
def test_errors_exit_two(argv, capsys):
    assert cli.main(argv) == 2
    assert capsys.readouterr().err.startswith("bjjsim: error:")


def test_bad_config_exits_two(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario: fig4\nfig4:\n  bogus: 1\n")
    assert cli.main(["fig4", "--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_console_script_usage():
    proc = subprocess.run([sys.executable, "-m", "bjjsim.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("bjjsim ")
    proc = subprocess.run([sys.executable, "-m", "bjjsim.cli", "potential"], capture_output=True, text=True)
    assert proc.returncode == 2
