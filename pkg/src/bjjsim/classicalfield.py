"""Classical-field Monte Carlo for a split Bose gas at finite temperature.

The gas is modeled as quasi-1D: the transverse ground band is an interacting
classical field along x (g_1D coupling), sampled by Metropolis over its
single-particle mode amplitudes below an energy cutoff. Transversally excited
bands are treated as an ideal classical reservoir that exchanges atoms with
the field; it is integrated out analytically, so the Markov chain only sees
its weight ``Omega(S)`` as a function of the reservoir norm ``S``. The total
norm is fixed to N (canonical).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg, special

from . import constants as const
from . import gpe
from ._kernels import field_energy, log_weight, metropolis_run, pair_rotation
from .potential import DoubleWellShape, quartic_eval

log = logging.getLogger(__name__)


class ClassicalFieldError(Exception):
    pass


class NonErgodicError(ClassicalFieldError):
    pass


# ---------------------------------------------------------------------------
# types


@dataclass
class FieldSample:
    psi: np.ndarray  # transverse ground band field on the grid
    grid: gpe.Grid
    reservoir_norm: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dv) + self.reservoir_norm


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float  # K
    n_sweeps: int = 12000  # chain length including burn-in
    burn_in: int = 3000
    proposal: float = 0.2  # initial U(2) generator amplitude (rad)
    alpha: float = 1.0  # cutoff in units of k_B T when ``cutoff`` is not given
    cutoff: float | None = None  # J above the lowest single-particle level
    seed: int = 0
    stride: int = 2
    blocks: int = 32
    min_modes: int = 4
    transverse: tuple[float, float] | None = None  # (omega_y, omega_z) rad/s for the reservoir

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.n_sweeps <= self.burn_in:
            raise ValueError("chain length must exceed burn-in")
        if not self.alpha > 0 or (self.cutoff is not None and not self.cutoff > 0):
            raise ValueError("cutoff must be positive")
        if self.stride < 1 or self.blocks < 2:
            raise ValueError("stride >= 1 and blocks >= 2 required")

    def cutoff_energy(self) -> float:
        if self.cutoff is not None:
            return self.cutoff
        return self.alpha * const.kB * self.temperature


@dataclass
class FluctuationReport:
    temperature: float
    n_atoms: float
    normal_variance: float  # <(n_L - n_R)^2> - <n_L - n_R>^2 from the fields
    n2m: float
    total_variance: float  # (N - N_2m) + normal_variance
    xi2: float
    xi2_err: float
    n2m_err: float
    normal_variance_err: float
    acceptance: float
    tau_int: float  # slowest autocorrelation time, sweeps
    n_samples: int

    @property
    def valid(self) -> bool:
        """Classical fields cannot describe sub-binomial states."""
        return bool(self.xi2 >= 1.0 - 3.0 * self.xi2_err)


# ---------------------------------------------------------------------------
# single-particle structure


def kinetic_matrix(grid: gpe.Grid, mass: float) -> np.ndarray:
    """Spectral kinetic-energy operator on the periodic 1D grid (J)."""
    n = grid.points[0]
    k2 = grid.k_squared()
    col = np.real(np.fft.ifft(const.hbar**2 * k2 / (2 * mass)))
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


def single_particle_modes(V: np.ndarray, grid: gpe.Grid, mass: float, e_max: float | None = None,
                          min_modes: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Eigenmodes of ``p^2/2m + V(x)`` with energy up to ``e_max`` above the lowest.

    Returns ``(eps, phi)`` with ``phi[:, k]`` normalized so ``sum phi^2 dx = 1``.
    """
    if grid.dims != 1:
        raise ClassicalFieldError("classical-field band must live on a 1D grid")
    H = kinetic_matrix(grid, mass) + np.diag(V)
    eps, vec = linalg.eigh(H)
    if e_max is None:
        keep = len(eps)
    else:
        keep = max(int(np.searchsorted(eps, eps[0] + e_max, side="right")), min_modes)
    keep = min(keep, len(eps))
    if keep > 0.6 * len(eps):
        raise ClassicalFieldError(
            f"cutoff keeps {keep} of {len(eps)} grid modes; refine or widen the grid"
        )
    return eps[:keep], vec[:, :keep] / math.sqrt(grid.dv)


def partition_matrix(phi: np.ndarray, grid: gpe.Grid, plane: float = 0.0) -> np.ndarray:
    """``D_kk' = int sign(x - plane) phi_k phi_k' dx`` (left/right difference operator)."""
    x = grid.x
    if not x[0] < plane < x[-1]:
        raise ClassicalFieldError("partition plane lies outside the grid")
    w = np.sign(x - plane)
    return (phi * w[:, None]).T @ phi * grid.dv


def harmonic_tc(n_atoms: float, frequencies_hz: Sequence[float]) -> float:
    """Ideal-gas transition temperature ``hbar wbar (N / zeta(3))^(1/3) / k_B`` (K)."""
    wbar = 2 * np.pi * float(np.prod(frequencies_hz)) ** (1 / 3)
    return const.hbar * wbar * (n_atoms / special.zeta(3)) ** (1 / 3) / const.kB


# ---------------------------------------------------------------------------
# incoherent region


def _transverse_overlap(n: int) -> float:
    """``int chi_0^2 chi_n^2 / int chi_0^4`` for harmonic-oscillator states."""
    return math.comb(2 * n, n) / 4**n


def _bose(x):
    return 1.0 / np.expm1(x)


@dataclass
class Reservoir:
    """Ideal Bose gas of every mode outside the classical field.

    Modes are ``(b, k)``: transverse band ``b`` (energy ``E_b``) times the
    1D level ``eps_k``. Band 0 contributes only its levels above the field
    cutoff. Reservoir atoms carry a uniform mean-field energy
    ``hartree * ((N - S) S + S^2 / 2)``: one coupling for their overlap with
    the field and with each other, so every reservoir level sits
    ``hartree * N`` higher regardless of the split, and the canonical weight
    depends on the reservoir population ``S`` alone. ``ln Z_S`` comes from the grand potential by a saddle-point
    (Legendre) transform, tabulated uniformly in ``ln S``.
    """

    eps: np.ndarray  # 1D levels (J), ascending
    band_energies: np.ndarray  # (J), band 0 first with E = 0
    band_overlaps: np.ndarray
    first_free: int  # band-0 levels below this index belong to the field
    temperature: float
    n_total: float
    hartree: float = 0.0  # J per atom pair involving the reservoir
    span: float = 12.0  # keep levels up to span k_B T above the lowest one

    def __post_init__(self):
        if self.temperature <= 0:
            raise ClassicalFieldError("the incoherent region needs T > 0")
        self.eps = np.asarray(self.eps, dtype=float)
        self.band_energies = np.asarray(self.band_energies, dtype=float)
        self.band_overlaps = np.asarray(self.band_overlaps, dtype=float)
        kT = const.kB * self.temperature
        e = self.eps[None, :] + self.band_energies[:, None]
        mask = np.ones(e.shape, dtype=bool)
        mask[0, : self.first_free] = False
        if not mask.any():
            raise ClassicalFieldError("no reservoir levels")
        self.e_min = float(e[mask].min())
        mask &= e - self.e_min <= self.span * kT
        self.mask = mask
        self._levels = e
        self._table()

    @classmethod
    def transverse(cls, eps, omegas, first_free, temperature, n_total, hartree=0.0, span=12.0) -> "Reservoir":
        wy, wz = omegas
        ey, ez = const.hbar * wy, const.hbar * wz
        top = span * const.kB * temperature + (eps[-1] - eps[0])
        bands, overlaps = [0.0], [1.0]
        for i in range(int(top / ey) + 1):
            for j in range(int(top / ez) + 1):
                if (i or j) and i * ey + j * ez <= span * const.kB * temperature + ey + ez:
                    bands.append(i * ey + j * ez)
                    overlaps.append(_transverse_overlap(i) * _transverse_overlap(j))
        return cls(np.asarray(eps), np.asarray(bands), np.asarray(overlaps), int(first_free), temperature,
                   n_total, hartree, span)

    @property
    def n_modes(self) -> int:
        return int(self.mask.sum())

    @property
    def beta(self) -> float:
        return 1.0 / (const.kB * self.temperature)

    def _table(self, exact=4000, bins=6000, points=4096):
        g = np.sort(self.beta * (self._levels[self.mask] - self.e_min))
        # lowest levels exactly, the dilute tail binned
        lo, hi = g[:exact], g[exact:]
        if len(hi):
            cnt, edges = np.histogram(hi, bins=bins)
            sums, _ = np.histogram(hi, bins=edges, weights=hi)
            keep = cnt > 0
            lo = np.concatenate([lo, sums[keep] / cnt[keep]])
            w = np.concatenate([np.ones(exact), cnt[keep].astype(float)])
        else:
            w = np.ones(len(lo))
        y = np.logspace(-9, 2.5, 3000)  # beta (e_min - mu)
        x = lo[None, :] + y[:, None]
        with np.errstate(over="ignore", divide="ignore"):
            n = _bose(x)
            S = n @ w
            var = (n * (n + 1)) @ w
            ln_gc = -np.log(-np.expm1(-x)) @ w
            # saddle point of the canonical projection; the beta*e_min*S part is added below
            lnz = ln_gc + y * S - 0.5 * np.log(2 * np.pi * var)
        ok = (S > 1e-12) & np.isfinite(lnz)
        lnS = np.log(S[ok])[::-1]
        lnz, y = lnz[ok][::-1], y[ok][::-1]
        self.ln_lo = float(lnS[0])
        grid = np.linspace(self.ln_lo, max(math.log(self.n_total), lnS[0] + 1e-6), points)
        self.ln_step = float(grid[1] - grid[0])
        Sg = np.exp(grid)
        table = np.interp(grid, lnS, lnz) - self.beta * self.e_min * Sg
        table -= self.beta * self.hartree * ((self.n_total - Sg) * Sg + 0.5 * Sg**2)
        self.log_table = table
        self._lnS, self._lny = lnS, np.log(y)

    def log_weight(self, s: float) -> float:
        return float(log_weight(self.log_table, self.ln_lo, self.ln_step, float(s)))

    def occupations(self, s) -> np.ndarray:
        """Mean Bose occupations (bands x 1D levels) at reservoir population ``s``."""
        ls = min(max(math.log(max(float(s), 1e-300)), self._lnS[0]), self._lnS[-1])
        y = math.exp(np.interp(ls, self._lnS, self._lny))
        x = self.beta * (self._levels - self.e_min) + y
        return np.where(self.mask, _bose(np.maximum(x, 1e-300)), 0.0)

    def normal_variance(self, s, D2: np.ndarray, floor=1e-9) -> float:
        """Wick estimate of the reservoir's ``Var(n_L - n_R)`` at population ``s``."""
        n = self.occupations(s)[:, : D2.shape[0]]
        rows = n.max(axis=1) > floor
        cols = np.nonzero(n.max(axis=0) > floor)[0]
        if not rows.any():
            return 0.0
        k = cols[-1] + 1
        n = n[rows, :k]
        return float(np.sum((n @ D2[:k, :k]) * n))


# ---------------------------------------------------------------------------
# model assembly


@dataclass
class FieldModel:
    grid: gpe.Grid
    V: np.ndarray
    params: gpe.GpeParams
    temperature: float
    eps: np.ndarray
    phi: np.ndarray
    D: np.ndarray
    reservoir: Reservoir | None = None
    reservoir_D: np.ndarray | None = None  # partition operator over the reservoir's 1D levels
    pair_energy: float = 0.0  # g_1D int rho_hat^2 dx (J), mean-field scale used for the start point

    @property
    def n_modes(self) -> int:
        return len(self.eps)

    @property
    def g_dx(self) -> float:
        if self.params.a_s == 0:
            return 0.0
        return self.params.coupling(1) * self.grid.dv

    def energy(self, c) -> float:
        return float(field_energy(np.asarray(c, dtype=complex), self.eps, self.phi, self.g_dx))

    def field(self, c) -> np.ndarray:
        return self.phi @ c


@dataclass
class LevelSpectrum:
    """1D levels on a (usually wider) grid, shared by all temperatures."""

    eps: np.ndarray
    D: np.ndarray

    @classmethod
    def compute(cls, V, grid: gpe.Grid, mass: float, e_max: float, plane: float = 0.0) -> "LevelSpectrum":
        H = kinetic_matrix(grid, mass) + np.diag(V)
        eps, vec = linalg.eigh(H, subset_by_value=(-np.inf, _first_level(H) + e_max))
        if len(eps) > 0.6 * len(V):
            raise ClassicalFieldError("reservoir grid too coarse for the requested energy span")
        phi = vec / math.sqrt(grid.dv)
        return cls(eps, partition_matrix(phi, grid, plane))


def _first_level(H):
    return float(linalg.eigh(H, eigvals_only=True, subset_by_index=(0, 0))[0])


def build_model(V: np.ndarray, grid: gpe.Grid, params: gpe.GpeParams, config: SamplerConfig,
                plane: float = 0.0, density_shape: np.ndarray | None = None, *,
                mu_offset: float = 0.0, spectrum: LevelSpectrum | None = None) -> FieldModel:
    """Mode basis, partition operator and (optionally) the incoherent region.

    The field keeps levels up to ``cutoff + mu_offset`` above the lowest one.
    ``density_shape`` (normalized to 1) is the field density profile that
    sets the Hartree shift of the incoherent region; ``spectrum`` holds its
    1D levels (computed on ``grid`` when missing).
    """
    T = config.temperature
    cut = config.cutoff_energy() + max(mu_offset, 0.0)
    eps, phi = single_particle_modes(V, grid, params.mass, cut, config.min_modes)
    D = partition_matrix(phi, grid, plane)
    pair = 0.0
    if density_shape is not None and params.a_s > 0:
        pair = params.coupling(1) * float(np.sum(density_shape**2) * grid.dv)
    reservoir = None
    res_D = None
    if config.transverse is not None and T > 0:
        span = 12.0
        if spectrum is None:
            try:
                spectrum = LevelSpectrum.compute(V, grid, params.mass, span * const.kB * T, plane)
            except ClassicalFieldError as exc:
                raise ClassicalFieldError(f"{exc}; pass a LevelSpectrum computed on a wider grid") from exc
        # the lowest excited transverse band overlaps the field with weight 1/2
        reservoir = Reservoir.transverse(spectrum.eps, config.transverse, len(eps), T, params.n_atoms,
                                         0.5 * 2 * pair, span)
        res_D = spectrum.D
    return FieldModel(grid, np.asarray(V), params, T, eps, phi, D, reservoir, res_D, pair)


def auto_grid(shape: DoubleWellShape, e_max: float, mass: float = const.M_RB87, min_points: int = 128) -> gpe.Grid:
    """1D grid wide enough for the quartic up to ``e_max`` and fine enough for its momenta."""
    vb = max(shape.barrier_height, 1e-40)
    # V(x) = 4 e_max well outside the classically allowed region
    s = math.sqrt(1 + math.sqrt(4 * max(e_max, vb) / vb))
    extent = 2 * 1.15 * s * shape.half_spacing
    kmax = math.sqrt(2 * mass * 4 * max(e_max, vb)) / const.hbar
    n = max(min_points, int(2 ** math.ceil(math.log2(extent * kmax / math.pi))))
    return gpe.Grid((extent,), (n,))


# ---------------------------------------------------------------------------
# sampling


@dataclass
class Ensemble:
    model: FieldModel
    config: SamplerConfig
    coefficients: np.ndarray  # (samples, modes)
    energies: np.ndarray
    acceptance: float
    add_acceptance: float
    tau_int: float  # sweeps

    def __len__(self):
        return len(self.coefficients)

    @property
    def n_atoms(self) -> float:
        return self.model.params.n_atoms

    @property
    def band_norms(self) -> np.ndarray:
        return np.sum(np.abs(self.coefficients) ** 2, axis=1)

    @property
    def reservoir_norms(self) -> np.ndarray:
        if self.model.reservoir is None:
            return np.zeros(len(self))
        return self.n_atoms - self.band_norms

    def samples(self):
        for c, s in zip(self.coefficients, self.reservoir_norms):
            yield FieldSample(self.model.field(c), self.model.grid, float(s))


def integrated_autocorrelation(x: np.ndarray) -> float:
    """Integrated autocorrelation time (in samples) with Sokal's window, c = 5."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = len(x)
    if n < 4 or np.allclose(x, 0):
        return 0.5
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n]
    acf /= acf[0]
    tau = 0.5
    for m in range(1, n):
        tau += acf[m]
        if m >= 5 * tau:
            break
    return float(max(tau, 0.5))


def initial_amplitudes(model: FieldModel, psi0: np.ndarray | None, n_band: float) -> np.ndarray:
    if psi0 is None:
        c = np.zeros(model.n_modes, dtype=complex)
        c[0] = 1.0
    else:
        c = (model.phi.T @ psi0) * model.grid.dv
    c = c.astype(complex)
    return c * math.sqrt(n_band / np.sum(np.abs(c) ** 2))


def sample(V, params: gpe.GpeParams, config: SamplerConfig, grid: gpe.Grid | None = None, *,
           psi0: np.ndarray | None = None, model: FieldModel | None = None,
           plane: float = 0.0, mu_offset: float = 0.0) -> Ensemble:
    """Metropolis chain for the classical field at fixed total norm N.

    ``V`` is a potential array on ``grid`` or a ``DoubleWellShape``. ``psi0``
    (e.g. the GP ground state) seeds the chain; otherwise the lowest mode.
    """
    spectrum = None
    if isinstance(V, DoubleWellShape):
        if model is None and config.transverse is not None and config.temperature > 0:
            e_res = 12.0 * const.kB * config.temperature
            wide = auto_grid(V, e_res, params.mass)
            spectrum = LevelSpectrum.compute(quartic_eval(V, wide.x), wide, params.mass, e_res, plane)
        grid = grid or auto_grid(V, max(config.cutoff_energy(), 1e-40) * 2, params.mass)
        V = quartic_eval(V, grid.x)
    if grid is None:
        raise ClassicalFieldError("a grid is required with a potential array")
    if model is None:
        shape = None
        if psi0 is not None:
            shape = np.abs(psi0) ** 2 / (np.sum(np.abs(psi0) ** 2) * grid.dv)
        model = build_model(V, grid, params, config, plane, shape, mu_offset=mu_offset, spectrum=spectrum)
    N = float(params.n_atoms)
    T = config.temperature
    beta = 1.0 / (const.kB * T) if T > 0 else 1e300
    res = model.reservoir
    if res is not None:
        # start the reservoir near the maximum of its weight times the band-0 Boltzmann factor
        s0 = _initial_reservoir_norm(res, model, N, beta)
        logw, ln_lo, ln_step, p_pair = res.log_table, res.ln_lo, res.ln_step, 0.5
    else:
        s0 = 0.0
        logw, ln_lo, ln_step, p_pair = np.zeros(1), 0.0, 1.0, 1.0
    c = initial_amplitudes(model, psi0, N - s0)
    rng = np.random.default_rng(config.seed)
    K = model.n_modes
    sig_rot = config.proposal
    sig_add = 0.3 * math.sqrt(max(N - s0, 1.0) / K)
    dummy = np.empty((0, K), dtype=complex)
    dummy_e = np.empty(0)

    def run(n, sig_rot, sig_add, samples=dummy, energies=dummy_e, stride=1):
        seed = int(rng.integers(0, 2**31 - 1))
        return metropolis_run(c, model.eps, model.phi, model.g_dx, beta, N, logw, ln_lo, ln_step,
                              p_pair, sig_rot, sig_add, n, stride, seed, samples, energies)

    # burn-in with step-size tuning toward ~40% acceptance
    chunk = 50
    done = 0
    while done < config.burn_in:
        n = min(chunk, config.burn_in - done)
        ap, tp, aa, ta = run(n, sig_rot, sig_add)
        if tp:
            sig_rot = float(np.clip(sig_rot * math.exp(ap / tp - 0.4), 1e-6, math.pi))
        if ta:
            sig_add = float(np.clip(sig_add * math.exp(aa / ta - 0.4), 1e-6, 10 * math.sqrt(N)))
        done += n
    _renormalize(c, N, res)
    production = config.n_sweeps - config.burn_in
    n_samples = production // config.stride
    if n_samples < 100:
        raise ClassicalFieldError("fewer than 100 samples; lengthen the chain")
    samples = np.empty((n_samples, K), dtype=complex)
    energies = np.empty(n_samples)
    ap, tp, aa, ta = run(production, sig_rot, sig_add, samples, energies, config.stride)
    acc = ap / tp if tp else float("nan")
    acc_add = aa / ta if ta else float("nan")
    overall = (ap + aa) / max(tp + ta, 1)
    saturated = sig_rot >= math.pi and (ta == 0 or sig_add >= 10 * math.sqrt(N))
    if overall < 0.05 or (overall > 0.9 and not saturated):
        warnings.warn(
            f"acceptance {overall:.2f} outside [0.05, 0.9] at T = {T:.3e} K; "
            "adjust 'proposal' or lengthen burn-in",
            stacklevel=2,
        )
    if res is None:
        # pair moves conserve the norm; remove floating drift from stored samples
        norms = np.sum(np.abs(samples) ** 2, axis=1)
        samples *= np.sqrt(N / norms)[:, None]
    # slowest of energy, field norm and number difference
    diff = np.real(np.einsum("si,ij,sj->s", samples.conj(), model.D, samples))
    series = (energies, np.sum(np.abs(samples) ** 2, axis=1), diff)
    tau = max(integrated_autocorrelation(x) for x in series) * config.stride
    if tau > production / 50:
        raise NonErgodicError(
            f"autocorrelation time {tau:.0f} sweeps exceeds chain/50 = {production / 50:.0f} at T = {T:.3e} K"
        )
    return Ensemble(model, config, samples, energies, acc, acc_add, tau)


def _initial_reservoir_norm(res, model, N, beta):
    # reservoir weight against a mean-field estimate of the field's free energy
    S = np.exp(np.linspace(res.ln_lo + 1, math.log(0.95 * N), 400))
    n0 = N - S
    score = np.array([res.log_weight(s) for s in S]) - beta * (model.eps[0] * n0 + 0.5 * model.pair_energy * n0**2)
    return float(S[np.argmax(score)])


def _renormalize(c, N, res):
    if res is None:
        c *= math.sqrt(N / np.sum(np.abs(c) ** 2))


# ---------------------------------------------------------------------------
# observables


def one_body_density_matrix(ensemble: Ensemble, in_modes: bool = True) -> np.ndarray:
    """``G = <psi*(x') psi(x)>`` over the ensemble (band-0 field).

    In the mode basis by default; ``in_modes=False`` returns it on the grid.
    """
    c = ensemble.coefficients
    G = c.T @ c.conj() / len(c)
    if in_modes:
        return G
    phi = ensemble.model.phi
    return phi @ G @ phi.T


def _top2(G, extra=None):
    herm = np.max(np.abs(G - G.conj().T)) if G.size else 0.0
    if herm > 1e-9 * max(np.max(np.abs(G)), 1e-300):
        raise ClassicalFieldError("one-body density matrix is not Hermitian")
    ev = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
    if extra is not None and len(extra):
        ev = np.concatenate([ev, extra])
    ev = np.sort(ev)[::-1]
    return float(np.sum(ev[:2]))


def condensed_population(ensemble: Ensemble) -> float:
    """N_2m: the two largest eigenvalues of the one-body density matrix."""
    if len(ensemble) < 100:
        raise ClassicalFieldError("need at least 100 samples")
    extra = _reservoir_top(ensemble, np.arange(len(ensemble)))
    return min(max(_top2(one_body_density_matrix(ensemble), extra), 0.0), ensemble.n_atoms)


def _reservoir_top(ensemble, idx):
    res = ensemble.model.reservoir
    if res is None:
        return None
    s = ensemble.reservoir_norms[idx]
    occ = np.mean([np.sort(res.occupations(si).ravel())[-2:] for si in _representative(s)], axis=0)
    return occ


def _representative(s, k=8):
    # quantiles stand in for the full sample set when averaging smooth functions of s
    return np.quantile(s, (np.arange(k) + 0.5) / k)


def _reservoir_variance(ensemble, idx):
    res = ensemble.model.reservoir
    if res is None:
        return 0.0
    D2 = ensemble.model.reservoir_D**2
    s = ensemble.reservoir_norms[idx]
    return float(np.mean([res.normal_variance(si, D2) for si in _representative(s)]))


def _difference(ensemble):
    c = ensemble.coefficients
    return np.real(np.einsum("si,ij,sj->s", c.conj(), ensemble.model.D, c))


def _estimate(ensemble, idx, diff, res_var=None):
    c = ensemble.coefficients[idx]
    G = c.T @ c.conj() / len(c)
    n2m = min(max(_top2(G, _reservoir_top(ensemble, idx)), 0.0), ensemble.n_atoms)
    d = diff[idx]
    var = float(np.mean(d**2) - np.mean(d) ** 2)
    var += _reservoir_variance(ensemble, idx) if res_var is None else res_var
    N = ensemble.n_atoms
    return n2m, var, (N - n2m + var) / N


def fluctuations(ensemble: Ensemble, n2m: float | None = None) -> FluctuationReport:
    """Number-difference fluctuations with the quantum-corrected shot-noise term.

    ``Var(N_L - N_R) = (N - N_2m) + Var_normal``; errors by block jackknife.
    """
    N = ensemble.n_atoms
    idx_all = np.arange(len(ensemble))
    diff = _difference(ensemble)
    n2m_all, var_all, xi_all = _estimate(ensemble, idx_all, diff)
    if n2m is None:
        n2m = n2m_all
    var_res = _reservoir_variance(ensemble, idx_all)
    B = ensemble.config.blocks
    blocks = np.array_split(idx_all, B)
    jn, jv, jx = [], [], []
    for b in range(B):
        keep = np.concatenate([blocks[i] for i in range(B) if i != b])
        a, v, x = _estimate(ensemble, keep, diff, res_var=var_res)
        jn.append(a)
        jv.append(v)
        jx.append(x)

    def jk(vals):
        vals = np.asarray(vals)
        return float(math.sqrt((B - 1) / B * np.sum((vals - vals.mean()) ** 2)))

    total = (N - n2m) + var_all
    return FluctuationReport(
        temperature=ensemble.model.temperature,
        n_atoms=N,
        normal_variance=var_all,
        n2m=n2m,
        total_variance=total,
        xi2=total / N,
        xi2_err=max(jk(jx), 1e-300),
        n2m_err=max(jk(jn), 1e-300),
        normal_variance_err=max(jk(jv), 1e-300),
        acceptance=ensemble.acceptance,
        tau_int=ensemble.tau_int,
        n_samples=len(ensemble),
    )


def gp_energy(sample: FieldSample, V: np.ndarray, params: gpe.GpeParams) -> float:
    """GP energy functional of a field sample (band-0 field only)."""
    if np.shape(V) != sample.psi.shape:
        raise ClassicalFieldError("field and potential live on different grids")
    return gpe.gp_energy(sample.psi, V, sample.grid, params)


# ---------------------------------------------------------------------------
# detailed-balance audit


@dataclass
class AuditRecord:
    kind: str
    delta_e: float  # J
    log_ratio: float  # ln(A_forward / A_reverse)
    expected: float  # -beta dE + ln Omega change
    roundtrip: float  # |c'' - c| after applying the inverse move


def detailed_balance_audit(model: FieldModel, c, n_moves: int = 200, seed: int = 0,
                           sig_rot: float = 0.3, sig_add: float = 1.0) -> list[AuditRecord]:
    """Apply random moves and their inverses, recomputing energies from scratch.

    For each proposal the forward and reverse Metropolis acceptances are
    evaluated independently; their ratio must equal the target-density ratio.
    """
    rng = np.random.default_rng(seed)
    c = np.asarray(c, dtype=complex).copy()
    N = float(model.params.n_atoms)
    T = model.temperature
    beta = 1.0 / (const.kB * T)
    res = model.reservoir
    K = model.n_modes
    out = []

    def log_target(v):
        lt = -beta * model.energy(v)
        if res is not None:
            lt += res.log_weight(N - float(np.sum(np.abs(v) ** 2)))
        return lt

    for _ in range(n_moves):
        if res is None or rng.random() < 0.5:
            a, b = rng.choice(K, 2, replace=False)
            gen = sig_rot * rng.standard_normal(4)
            U = np.array(pair_rotation(*gen)).reshape(2, 2)
            Uinv = np.array(pair_rotation(*(-gen))).reshape(2, 2)
            c1 = c.copy()
            c1[[a, b]] = U @ c[[a, b]]
            c2 = c1.copy()
            c2[[a, b]] = Uinv @ c1[[a, b]]
            kind = "pair"
        else:
            a = int(rng.integers(K))
            eta = sig_add * (rng.standard_normal() + 1j * rng.standard_normal())
            c1 = c.copy()
            c1[a] += eta
            c2 = c1.copy()
            c2[a] -= eta
            kind = "exchange"
        l0, l1, l2 = log_target(c), log_target(c1), log_target(c2)
        fwd = min(0.0, l1 - l0)
        rev = min(0.0, l2 - l1)
        out.append(AuditRecord(kind, model.energy(c1) - model.energy(c), fwd - rev, l1 - l0,
                               float(np.max(np.abs(c2 - c)))))
        c = c1 if np.isfinite(l1) else c
    return out


# ---------------------------------------------------------------------------
# temperature sweeps


@dataclass
class CurveRow:
    t_over_tc: float
    xi2: float
    xi2_err: float
    n2m_frac: float
    xi2_tmm_ext: float
    valid: bool
    report: FluctuationReport | None = None
    error: str = ""


def xi2_curve(shape_or_V, params: gpe.GpeParams, t_over_tc: Sequence[float], config: SamplerConfig, *,
              tc_frequencies: Sequence[float], grid: gpe.Grid | None = None, E_C: float | None = None) -> list[CurveRow]:
    """xi^2(T) from the classical field plus the extended two-mode curve.

    ``config.temperature`` is ignored and replaced by each ``t * T_c``, where
    ``T_c`` is the harmonic transition temperature for ``tc_frequencies``.
    ``E_C`` (J) for the extended two-mode curve is computed with the GPE
    solver when not given.
    """
    from .twomode import extended_xi2

    t = np.asarray(t_over_tc, dtype=float)
    if np.any(np.diff(t) <= 0) or np.any(t <= 0):
        raise ValueError("temperature grid must be positive and ascending")
    N = params.n_atoms
    tc = harmonic_tc(N, tc_frequencies)
    top = replace(config, temperature=float(t[-1] * tc))
    wide = None
    if isinstance(shape_or_V, DoubleWellShape):
        grid = grid or auto_grid(shape_or_V, 2 * top.cutoff_energy(), params.mass)
        V = quartic_eval(shape_or_V, grid.x)
        if config.transverse is not None:
            wide = auto_grid(shape_or_V, 12 * const.kB * top.temperature, params.mass)
    else:
        V = np.asarray(shape_or_V)
        if grid is None:
            raise ValueError("a grid is required with a potential array")
    wf, mu = gpe.ground_state(V, grid, params, parity="even")
    if E_C is None:
        E_C = gpe.charging_energy(V, grid, params)
    eps0 = single_particle_modes(V, grid, params.mass, 0.0, 1)[0][0]
    mu_offset = mu - eps0
    spectrum = None
    if config.transverse is not None:
        # one wide spectrum serves every temperature
        if wide is None:
            wide = grid
            Vw = V
        else:
            Vw = quartic_eval(shape_or_V, wide.x)
        spectrum = LevelSpectrum.compute(Vw, wide, params.mass, 12 * const.kB * top.temperature)
    shape = np.abs(wf.psi) ** 2 / (np.sum(np.abs(wf.psi) ** 2) * grid.dv)
    rows = []
    for i, ti in enumerate(t):
        cfg = replace(config, temperature=float(ti * tc), seed=config.seed + i)
        try:
            model = build_model(V, grid, params, cfg, 0.0, shape, mu_offset=mu_offset, spectrum=spectrum)
            ens = sample(V, params, cfg, grid, psi0=wf.psi, model=model)
            rep = fluctuations(ens)
            ext = extended_xi2(N, E_C, cfg.temperature, rep.n2m)
            rows.append(CurveRow(float(ti), rep.xi2, rep.xi2_err, rep.n2m / N, ext, rep.valid, rep))
        except ClassicalFieldError as exc:
            log.warning("T/Tc = %.3f failed: %s", ti, exc)
            rows.append(CurveRow(float(ti), float("nan"), float("nan"), float("nan"), float("nan"), False,
                                 None, f"{type(exc).__name__}: {exc}"))
    return rows
