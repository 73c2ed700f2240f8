"""Imaging noise, synthetic shots and the number-squeezing estimator."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bjjsim import stats

# Rb-87 D2 values written out independently of the package constants
SIGMA = 3 * (780.241e-9) ** 2 / (2 * math.pi)
GAMMA = 2 * math.pi * 6.0666e6


def test_photon_noise_density_oracle():
    m = stats.ImagingNoiseModel()
    oracle = math.sqrt(16 / (0.84 * SIGMA * GAMMA * 50e-6))
    assert stats.photon_noise_density(m) == pytest.approx(oracle, rel=2e-3)


@given(st.integers(1, 20000), st.floats(0, 30))
def test_region_noise_adds_in_quadrature(pixels, fringe):
    m = stats.ImagingNoiseModel(fringe_atoms=fringe)
    photon = stats.photon_noise_density(m) * math.sqrt(pixels * m.pixel_area)
    assert stats.region_noise(m, pixels) == pytest.approx(math.hypot(photon, fringe), rel=1e-12)


def test_noise_model_validation():
    for bad in (dict(q=0.0), dict(q=1.2), dict(tau=0.0), dict(fringe_atoms=-1.0), dict(region_pixels=(0, 10))):
        with pytest.raises(stats.StatsError):
            stats.ImagingNoiseModel(**bad)


def test_noise_model_file(tmp_path):
    f = tmp_path / "noise.yaml"
    # exponent without sign or dot is a string in YAML 1.1 and must still load
    f.write_text("q: 0.9\ntau_s: 4.0e-5\ngamma_rad_s: 3.8e7\nregion_pixels: [100, 200]\n")
    m = stats.ImagingNoiseModel.from_file(f)
    assert (m.q, m.tau, m.gamma, m.region_pixels) == (0.9, 4e-5, 3.8e7, (100, 200))
    f.write_text("q: 0.9\nbogus: 1\n")
    with pytest.raises(stats.StatsError):
        stats.ImagingNoiseModel.from_file(f)
    f.write_text("q: fast\n")
    with pytest.raises(stats.StatsError):
        stats.ImagingNoiseModel.from_file(f)


# -- truths [TRIVIAL] --------------------------------------------------------


@pytest.mark.parametrize("n", [2, 100, 1300])
def test_truth_xi2(n):
    assert stats.fock(n).xi2 == 0.0
    assert stats.uniform_n(n).xi2 == pytest.approx(((n + 1) ** 2 - 1) / (3 * n), rel=1e-12)
    assert stats.Binomial(n).xi2 == 1.0


def test_gaussian_truth_variance():
    d = stats.gaussian_n(1300, 100.0)
    assert d.xi2 == pytest.approx(4 * 100.0 / 1300, rel=1e-3)
    with pytest.raises(stats.StatsError):
        stats.gaussian_n(100, 0.0)


def test_ladder_validation():
    with pytest.raises(stats.StatsError):
        stats.LadderDistribution(11, np.ones(12)).sample(np.random.default_rng(0), 3)
    with pytest.raises(stats.StatsError):
        stats.Binomial(100, 1.0).sample(np.random.default_rng(0), 3)


# -- estimator ---------------------------------------------------------------


def test_noise_free_estimator_matches_direct_formula():
    rng = np.random.default_rng(5)
    nl = rng.integers(400, 700, 50).astype(float)
    nr = rng.integers(400, 700, 50).astype(float)
    ds = stats.ShotDataset(nl, nr, np.zeros(50), np.zeros(50))
    fl = np.mean(nl / (nl + nr))
    fr = 1 - fl
    oracle = np.mean((fr * nl - fl * nr) ** 2 / (fl * fr * (nl + nr)))
    with pytest.warns(UserWarning):
        e = stats.estimate(ds)
    assert e.xi2 == pytest.approx(oracle, rel=1e-12) and e.zp2 == 0.0


@given(st.integers(200, 3000), st.floats(0.3, 0.7), st.booleans(), st.integers(0, 10**6))
def test_binomial_recovered(n, fl, noise, seed):
    model = stats.ImagingNoiseModel() if noise else None
    ds = stats.synthesize(stats.Binomial(n, fl), model, 4000, seed)
    e = stats.estimate(ds)
    # sampling error of <z^2> is about sqrt(2 / shots) times (1 + photon term)
    tol = 5 * math.sqrt(2 / 4000) * (1 + e.zp2)
    assert e.xi2 == pytest.approx(1.0, abs=tol)
    assert e.f_left == pytest.approx(fl, abs=0.01)


@given(st.floats(0.1, 10.0), st.integers(0, 10**6))
def test_xi2_scales_with_atom_calibration(c, seed):
    ds = stats.synthesize(stats.Binomial(800), stats.ImagingNoiseModel(), 300, seed)
    a = stats.xi2_statistic(ds)
    assert stats.xi2_statistic(ds.scaled(c)) == pytest.approx(c * a, rel=1e-9, abs=1e-12)


def test_fock_estimate_is_unclamped():
    ds = stats.synthesize(stats.fock(1300), stats.ImagingNoiseModel(), 2000, 11)
    e = stats.estimate(ds)
    assert abs(e.xi2) < 5 * math.sqrt(2 / 2000) * e.zp2
    # pure photon noise scatters the estimate around zero; negative values are kept
    values = [stats.estimate(stats.synthesize(stats.fock(1300), stats.ImagingNoiseModel(), 500, k)).xi2
              for k in range(12)]
    assert min(values) < 0 < max(values)


def test_one_sided_data_rejected():
    ds = stats.ShotDataset(np.full(5, 10.0), np.zeros(5), np.zeros(5), np.zeros(5))
    with pytest.raises(stats.StatsError), pytest.warns(UserWarning):
        stats.estimate(ds)


def test_dataset_validation():
    with pytest.raises(stats.StatsError):
        stats.ShotDataset([1.0, 2.0], [1.0], [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(stats.StatsError):
        stats.ShotDataset([1.0], [1.0], [-1.0], [0.0])
    with pytest.raises(stats.StatsError):
        stats.ShotDataset([0.0], [0.0], [0.0], [0.0])


def test_dataset_roundtrip(tmp_path):
    ds = stats.synthesize(stats.Binomial(100), stats.ImagingNoiseModel(), 20, 1)
    stats.write_dataset(ds, tmp_path / "d.csv")
    back = stats.read_dataset(tmp_path / "d.csv")
    for a, b in ((ds.NL, back.NL), (ds.NR, back.NR), (ds.dNL, back.dNL), (ds.dNR, back.dNR)):
        np.testing.assert_array_equal(a, b)
    (tmp_path / "bad.csv").write_text("NL,NR\n1,2\n")
    with pytest.raises(stats.StatsError):
        stats.read_dataset(tmp_path / "bad.csv")


def test_synthesis_is_seeded():
    a = stats.synthesize(stats.Binomial(500), stats.ImagingNoiseModel(), 50, 9)
    b = stats.synthesize(stats.Binomial(500), stats.ImagingNoiseModel(), 50, 9)
    c = stats.synthesize(stats.Binomial(500), stats.ImagingNoiseModel(), 50, 10)
    np.testing.assert_array_equal(a.NL, b.NL)
    assert not np.array_equal(a.NL, c.NL)


# -- bootstrap ---------------------------------------------------------------


def test_bootstrap_interval_properties():
    ds = stats.synthesize(stats.Binomial(1300), stats.ImagingNoiseModel(), 2000, 4)
    e = stats.estimate(ds, bootstrap=1000, seed=2)
    assert e.ci.low < e.xi2 < e.ci.high
    again = stats.estimate(ds, bootstrap=1000, seed=2)
    assert again.ci == e.ci
    wide = stats.bootstrap_ci(ds, resamples=1000, seed=2, level=0.95)
    assert wide.low <= e.ci.low and wide.high >= e.ci.high
    # width close to the analytic standard error of <z^2>
    se = math.sqrt(2 / 2000) * (1 + e.zp2)
    assert (e.ci.high - e.ci.low) / 2 == pytest.approx(se, rel=0.25)


def test_bootstrap_guards():
    ds = stats.synthesize(stats.Binomial(100), None, 200, 0)
    with pytest.raises(stats.StatsError):
        stats.bootstrap_ci(ds, resamples=500)
    with pytest.raises(stats.StatsError):
        stats.bootstrap_ci(ds, resamples=1000, level=1.0)
    same = stats.ShotDataset(np.full(200, 50.0), np.full(200, 50.0), np.zeros(200), np.zeros(200))
    with pytest.warns(UserWarning, match="zero-width"):
        stats.bootstrap_ci(same, resamples=1000)
