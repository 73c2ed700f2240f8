"""Atom-number statistics: imaging noise, synthetic shots and the xi^2 estimator."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import yaml

from . import constants as const


class StatsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# imaging noise


@dataclass(frozen=True)
class ImagingNoiseModel:
    q: float = 0.84  # quantum efficiency
    tau: float = 50e-6  # imaging pulse, s
    sigma: float = const.SIGMA_D2  # m^2
    gamma: float = const.GAMMA_D2  # rad/s
    pixel_area: float = 9.5e-12  # m^2
    region_pixels: tuple[int, int] = (800, 800)
    fringe_atoms: float = 0.0  # extra Gaussian noise per region, atoms
    scale: float = 1.0  # global calibration knob for sensitivity studies

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise StatsError("quantum efficiency must lie in (0, 1]")
        for name in ("tau", "sigma", "gamma", "pixel_area", "scale"):
            if not getattr(self, name) > 0:
                raise StatsError(f"{name} must be positive")
        if self.fringe_atoms < 0 or min(self.region_pixels) <= 0:
            raise StatsError("fringe noise must be >= 0 and regions non-empty")

    @classmethod
    def from_file(cls, path) -> "ImagingNoiseModel":
        data = yaml.safe_load(Path(path).read_text()) or {}
        keys = {
            "q": "q",
            "tau_s": "tau",
            "sigma_m2": "sigma",
            "gamma_rad_s": "gamma",
            "pixel_area_m2": "pixel_area",
            "region_pixels": "region_pixels",
            "fringe_atoms": "fringe_atoms",
            "scale": "scale",
        }
        unknown = set(data) - set(keys)
        if unknown:
            raise StatsError(f"unknown noise-model keys: {sorted(unknown)}")
        kw = {keys[k]: v for k, v in data.items()}
        try:
            # YAML 1.1 reads "1e7" (no dot, no sign) as a string
            kw = {k: tuple(int(p) for p in v) if k == "region_pixels" else float(v) for k, v in kw.items()}
        except (TypeError, ValueError) as exc:
            raise StatsError(f"noise model {path}: {exc}") from exc
        return cls(**kw)


def photon_noise_density(model: ImagingNoiseModel) -> float:
    """Photon-shot-noise limit on the column density, ``sqrt(16/(q sigma Gamma tau))`` (1/m)."""
    return math.sqrt(16.0 / (model.q * model.sigma * model.gamma * model.tau))


def region_noise(model: ImagingNoiseModel, n_pixels: int) -> float:
    """Atom-number standard deviation for a region of ``n_pixels`` pixels."""
    photon = photon_noise_density(model) * math.sqrt(n_pixels * model.pixel_area)
    return math.hypot(photon, model.fringe_atoms)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class ShotDataset:
    NL: np.ndarray
    NR: np.ndarray
    dNL: np.ndarray
    dNR: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        arrs = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (self.NL, self.NR, self.dNL, self.dNR)]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise StatsError("NL, NR, dNL, dNR must be 1-D arrays of equal length")
        self.NL, self.NR, self.dNL, self.dNR = arrs
        if np.any(self.dNL < 0) or np.any(self.dNR < 0):
            raise StatsError("photon-noise deviations must be >= 0")
        if np.any(self.NL + self.NR <= 0):
            raise StatsError("every shot needs N_L + N_R > 0")

    def __len__(self):
        return len(self.NL)

    def take(self, idx) -> "ShotDataset":
        return ShotDataset(self.NL[idx], self.NR[idx], self.dNL[idx], self.dNR[idx], dict(self.metadata))

    def scaled(self, c: float) -> "ShotDataset":
        return ShotDataset(c * self.NL, c * self.NR, c * self.dNL, c * self.dNR, dict(self.metadata))


def write_dataset(ds: ShotDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        _write_rows(ds, fh)


def _write_rows(ds, fh):
    w = csv.writer(fh)
    w.writerow(["NL", "NR", "dNL", "dNR"])
    for row in zip(ds.NL, ds.NR, ds.dNL, ds.dNR):
        w.writerow([repr(float(v)) for v in row])


def read_dataset(path) -> ShotDataset:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"NL", "NR", "dNL", "dNR"} <= set(reader.fieldnames):
            raise StatsError("dataset needs a header line with NL, NR, dNL, dNR")
        rows = [(float(r["NL"]), float(r["NR"]), float(r["dNL"]), float(r["dNR"])) for r in reader]
    if not rows:
        raise StatsError("dataset is empty")
    a = np.array(rows)
    return ShotDataset(a[:, 0], a[:, 1], a[:, 2], a[:, 3], {"source": "file", "path": str(path)})


# ---------------------------------------------------------------------------
# truth distributions


@dataclass(frozen=True)
class Binomial:
    n_atoms: int
    f_left: float = 0.5
    total_jitter: float = 0.0  # relative shot-to-shot spread of the total atom number

    def sample(self, rng, shots):
        if not 0 < self.f_left < 1 or self.n_atoms < 1 or self.total_jitter < 0:
            raise StatsError("invalid binomial parameters")
        n_tot = np.full(shots, self.n_atoms)
        if self.total_jitter:
            n_tot = np.maximum(1, np.rint(self.n_atoms * (1 + self.total_jitter * rng.uniform(-1, 1, shots)))).astype(int)
        nl = rng.binomial(n_tot, self.f_left)
        return nl.astype(float), (n_tot - nl).astype(float)

    @property
    def xi2(self):
        return 1.0


@dataclass(frozen=True)
class LadderDistribution:
    """Arbitrary distribution over ``n = (N_L - N_R)/2`` at fixed even N."""

    n_atoms: int
    probabilities: np.ndarray  # over n = -N/2 ... N/2

    def sample(self, rng, shots):
        p = np.asarray(self.probabilities, dtype=float)
        if self.n_atoms % 2 or len(p) != self.n_atoms + 1 or np.any(p < 0):
            raise StatsError("ladder distribution needs even N and N + 1 nonnegative weights")
        p = p / p.sum()
        n = rng.choice(np.arange(-self.n_atoms // 2, self.n_atoms // 2 + 1), size=shots, p=p)
        return self.n_atoms / 2 + n, self.n_atoms / 2 - n

    @property
    def xi2(self):
        p = np.asarray(self.probabilities, dtype=float)
        p = p / p.sum()
        n = np.arange(-self.n_atoms // 2, self.n_atoms // 2 + 1)
        return float(4 * (p @ n**2 - (p @ n) ** 2) / self.n_atoms)


def fock(n_atoms: int) -> LadderDistribution:
    p = np.zeros(n_atoms + 1)
    p[n_atoms // 2] = 1.0
    return LadderDistribution(n_atoms, p)


def uniform_n(n_atoms: int) -> LadderDistribution:
    return LadderDistribution(n_atoms, np.ones(n_atoms + 1))


def gaussian_n(n_atoms: int, n2: float) -> LadderDistribution:
    """Discretized Gaussian in n with variance close to ``n2``."""
    if n2 <= 0:
        raise StatsError("<n^2> must be positive")
    n = np.arange(-n_atoms // 2, n_atoms // 2 + 1)
    return LadderDistribution(n_atoms, np.exp(-(n**2) / (2 * n2)))


def synthesize(truth, model: ImagingNoiseModel | None, shots: int, seed: int) -> ShotDataset:
    """Draw ``shots`` (N_L, N_R) pairs from ``truth`` and add photon noise.

    ``model=None`` switches photon noise off.
    """
    if shots < 2:
        raise StatsError("need at least 2 shots")
    rng = np.random.default_rng(seed)
    nl, nr = truth.sample(rng, shots)
    if model is None:
        dl = dr = np.zeros(shots)
    else:
        dl = np.full(shots, model.scale * region_noise(model, model.region_pixels[0]))
        dr = np.full(shots, model.scale * region_noise(model, model.region_pixels[1]))
        nl = nl + rng.normal(0.0, 1.0, shots) * dl
        nr = nr + rng.normal(0.0, 1.0, shots) * dr
    meta = {"source": "synthetic", "truth": type(truth).__name__, "truth_xi2": truth.xi2, "seed": seed}
    return ShotDataset(nl, nr, dl, dr, meta)


# ---------------------------------------------------------------------------
# estimator


class ConfidenceInterval(NamedTuple):
    low: float
    high: float

    @property
    def degenerate(self) -> bool:
        return self.low == self.high


@dataclass(frozen=True)
class Estimate:
    f_left: float
    f_right: float
    xi2: float
    z2: float
    zp2: float
    n_shots: int
    ci: ConfidenceInterval | None = None

    @property
    def xi2_db(self) -> float:
        return 10 * math.log10(self.xi2) if self.xi2 > 0 else float("nan")


def _moments(NL, NR, dNL, dNR):
    tot = NL + NR
    fl = float(np.mean(NL / tot))
    if not 0 < fl < 1:
        raise StatsError("all atoms on one side; splitting fraction undefined")
    fr = 1.0 - fl
    n = fr * NL - fl * NR
    z2 = n**2 / (fl * fr * tot)
    zp2 = (fr**2 * dNL**2 + fl**2 * dNR**2) / (fl * fr * tot)
    return fl, fr, float(np.mean(z2)), float(np.mean(zp2))


def xi2_statistic(ds: ShotDataset) -> float:
    _, _, z2, zp2 = _moments(ds.NL, ds.NR, ds.dNL, ds.dNR)
    return z2 - zp2


def estimate(ds: ShotDataset, *, bootstrap: int = 0, seed: int = 0, level: float = 0.68) -> Estimate:
    """Number-squeezing estimate with photon-noise subtraction.

    ``f_L`` is the shot-averaged left fraction; per shot
    ``n = f_R N_L - f_L N_R``, ``z = n / sqrt(f_L f_R N)`` and ``z_p`` carries
    the photon noise. ``xi^2 = <z^2> - <z_p^2>`` is reported unclamped.
    """
    if len(ds) < 2:
        raise StatsError("need at least 2 shots")
    if len(ds) < 100:
        warnings.warn(f"only {len(ds)} shots; the estimate is noisy below ~100", stacklevel=2)
    fl, fr, z2, zp2 = _moments(ds.NL, ds.NR, ds.dNL, ds.dNR)
    ci = bootstrap_ci(ds, xi2_statistic, bootstrap, seed, level) if bootstrap else None
    return Estimate(fl, fr, z2 - zp2, z2, zp2, len(ds), ci)


def bootstrap_ci(
    ds: ShotDataset,
    statistic: Callable[[ShotDataset], float] = xi2_statistic,
    resamples: int = 2000,
    seed: int = 0,
    level: float = 0.68,
) -> ConfidenceInterval:
    """Percentile bootstrap interval over shots."""
    if resamples < 1000:
        raise StatsError("use at least 1000 bootstrap resamples")
    if not 0 < level < 1:
        raise StatsError("confidence level must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = len(ds)
    values = np.empty(resamples)
    for i in range(resamples):
        values[i] = statistic(ds.take(rng.integers(0, n, n)))
    lo, hi = np.quantile(values, [(1 - level) / 2, (1 + level) / 2])
    ci = ConfidenceInterval(float(lo), float(hi))
    if ci.degenerate:
        warnings.warn("zero-width bootstrap interval (all shots identical?)", stacklevel=2)
    return ci
