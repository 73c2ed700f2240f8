"""Gross-Pitaevskii ground states and two-mode parameters.

Split-step spectral propagation in imaginary time on a periodic grid, in 1D
(with a Gaussian transverse reduction of the coupling) or 3D. From the
symmetric and antisymmetric states of a double well we get the Josephson
energy ``E_J = N (mu_a - mu_s) / 2``; from single-well chemical potentials the
charging energy ``E_C = 2 d mu_w / d N_w``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import constants as const

log = logging.getLogger(__name__)


class GpeError(Exception):
    pass


class ConvergenceError(GpeError):
    pass


class BoundaryLeakageError(GpeError):
    pass


@dataclass(frozen=True)
class Grid:
    """Periodic grid centred on the origin; ``spacing = extent / points``."""

    extents: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        ext = tuple(float(e) for e in np.atleast_1d(self.extents))
        pts = tuple(int(p) for p in np.atleast_1d(self.points))
        if len(ext) != len(pts) or len(ext) not in (1, 3):
            raise ValueError("grid must be 1D or 3D with one extent per axis")
        if min(pts) < 16:
            raise ValueError("need at least 16 points per axis")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "points", pts)

    @property
    def dims(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.extents, self.points))

    @property
    def dv(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def axes(self) -> list[np.ndarray]:
        return [-e / 2 + d * np.arange(n) for e, d, n in zip(self.extents, self.spacing, self.points)]

    @property
    def x(self) -> np.ndarray:
        return self.axes[0]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def k_squared(self) -> np.ndarray:
        ks = [2 * np.pi * np.fft.fftfreq(n, d) for n, d in zip(self.points, self.spacing)]
        kk = np.meshgrid(*ks, indexing="ij")
        return sum(k**2 for k in kk)

    def mirror_x(self, a: np.ndarray) -> np.ndarray:
        """Values at ``-x`` (point 0 sits at -L/2, which maps onto itself)."""
        return np.roll(np.flip(a, axis=0), 1, axis=0)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.extents, tuple(p * factor for p in self.points))


@dataclass(frozen=True)
class GpeParams:
    n_atoms: float
    mass: float = const.M_RB87
    a_s: float = const.A_S_RB87
    omega_perp: float | None = None  # rad/s, 1D reduction only

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if self.a_s < 0:
            raise ValueError("a_s must be >= 0")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")

    @property
    def g3d(self) -> float:
        return 4 * np.pi * const.hbar**2 * self.a_s / self.mass

    def coupling(self, dims: int) -> float:
        if dims == 3:
            return self.g3d
        if self.omega_perp is None:
            raise ValueError("1D coupling needs omega_perp")
        return self.g3d * self.mass * self.omega_perp / (2 * np.pi * const.hbar)

    def with_atoms(self, n: float) -> "GpeParams":
        return GpeParams(n, self.mass, self.a_s, self.omega_perp)


@dataclass
class Wavefunction:
    psi: np.ndarray
    grid: Grid
    energy: float | None = None
    history: list[float] = field(default_factory=list, repr=False)
    iterations: int = 0

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.grid.dv)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2


@dataclass
class TwoModeParameters:
    E_C: float  # J
    E_J: float  # J
    n_atoms: float
    mu: float = float("nan")  # J, chemical potential of the symmetric state
    context: object = None


# ---------------------------------------------------------------------------
# energies


def _kinetic_density(psi, grid, mass, k2=None):
    k2 = grid.k_squared() if k2 is None else k2
    tpsi = np.fft.ifftn(const.hbar**2 * k2 / (2 * mass) * np.fft.fftn(psi))
    return np.real(np.conj(psi) * tpsi)


def energy_components(psi: np.ndarray, V: np.ndarray, grid: Grid, params: GpeParams) -> tuple[float, float, float]:
    """Kinetic, potential and interaction parts of the GP energy functional."""
    g = params.coupling(grid.dims)
    dens = np.abs(psi) ** 2
    kin = float(np.sum(_kinetic_density(psi, grid, params.mass)) * grid.dv)
    pot = float(np.sum(V * dens) * grid.dv)
    inter = float(0.5 * g * np.sum(dens**2) * grid.dv)
    return kin, pot, inter


def gp_energy(psi: np.ndarray, V: np.ndarray, grid: Grid, params: GpeParams) -> float:
    return sum(energy_components(psi, V, grid, params))


def chemical_potential(psi: np.ndarray, V: np.ndarray, grid: Grid, params: GpeParams) -> float:
    """``<psi| -hbar^2 lap/2m + V + g|psi|^2 |psi> / N``."""
    kin, pot, inter = energy_components(psi, V, grid, params)
    n = np.sum(np.abs(psi) ** 2) * grid.dv
    return (kin + pot + 2 * inter) / n


# ---------------------------------------------------------------------------
# solvers


def _initial_guess(V, grid, params, parity):
    g = params.coupling(grid.dims)
    dv = V - V.min()
    n = params.n_atoms
    scale = const.hbar * 2 * np.pi * 300.0
    psi = np.exp(-dv / (2 * scale))
    if g > 0:
        lo, hi = 0.0, float(dv.max())
        for _ in range(100):
            mu = 0.5 * (lo + hi)
            if np.sum(np.clip(mu - dv, 0, None)) / g * grid.dv > n:
                hi = mu
            else:
                lo = mu
        tf = np.sqrt(np.clip(mu - dv, 0, None) / g)
        psi = tf + 1e-3 * tf.max() * psi / psi.max()
    if parity == "odd":
        psi = psi * np.sign(grid.mesh()[0] + 1e-30)
    return psi.astype(complex)


def _project(psi, grid, parity):
    if parity is None:
        return psi
    m = grid.mirror_x(psi)
    return 0.5 * (psi + m) if parity == "even" else 0.5 * (psi - m)


def ground_state(
    V: np.ndarray,
    grid: Grid,
    params: GpeParams,
    *,
    dt: float = 1e-6,
    tol: float = 1e-10,
    max_steps: int = 400_000,
    psi0: np.ndarray | None = None,
    parity: str | None = None,
    check_every: int = 10,
    anneal: Sequence[float] = (16.0, 4.0, 1.0),
    leak_tol: float = 1e-6,
) -> tuple[Wavefunction, float]:
    """Imaginary-time relaxation to the lowest state (of a given x-parity).

    The step is annealed through ``dt * anneal`` so that most of the
    relaxation happens with large steps; the last stage uses ``dt`` and stops
    when the per-step relative energy change falls below ``tol``.

    Returns the normalized :class:`Wavefunction` (``int |psi|^2 = N``) and the
    chemical potential, both measured on the input potential's energy zero.
    """
    if parity not in (None, "even", "odd"):
        raise ValueError("parity must be None, 'even' or 'odd'")
    V = np.asarray(V, dtype=float)
    if V.shape != tuple(grid.points):
        raise ValueError("potential shape does not match grid")
    if not np.all(np.isfinite(V)):
        raise ValueError("potential must be finite")
    g = params.coupling(grid.dims)
    n_atoms = params.n_atoms
    k2 = grid.k_squared()
    kin = const.hbar * k2 / (2 * params.mass)  # rad/s

    psi = _initial_guess(V, grid, params, parity) if psi0 is None else np.asarray(psi0, dtype=complex).copy()
    psi = _project(psi, grid, parity)
    psi *= np.sqrt(n_atoms / (np.sum(np.abs(psi) ** 2) * grid.dv))

    def energy(p):
        return gp_energy(p, V, grid, params)

    history = [energy(psi)]
    steps = 0
    for stage, factor in enumerate(anneal):
        tau = dt * factor
        if g > 0 and factor > 1:
            # keep the nonlinear phase per step small in the coarse stages
            tau = max(dt, min(tau, 0.2 * const.hbar / (g * np.max(np.abs(psi) ** 2))))
        final = stage == len(anneal) - 1
        stage_tol = tol if final else max(tol, 1e-9)
        kin_prop = np.exp(-kin * tau)
        e_old = history[-1]
        converged = False
        while steps < max_steps:
            saved = psi.copy()
            for _ in range(check_every):
                psi *= np.exp(-(V + g * np.abs(psi) ** 2) * tau / (2 * const.hbar))
                psi = np.fft.ifftn(kin_prop * np.fft.fftn(psi))
                # renormalize before the second nonlinear half step; the imaginary-time
                # norm decay would otherwise scale g by 1 - O(mu tau / hbar)
                psi *= np.sqrt(n_atoms / (np.sum(np.abs(psi) ** 2) * grid.dv))
                psi *= np.exp(-(V + g * np.abs(psi) ** 2) * tau / (2 * const.hbar))
                psi = _project(psi, grid, parity)
                psi *= np.sqrt(n_atoms / (np.sum(np.abs(psi) ** 2) * grid.dv))
            steps += check_every
            e_new = energy(psi)
            scale = max(abs(e_new), 1e-300)
            rise = (e_new - e_old) / scale
            if rise > 0:
                log.debug("stage %d tau %.3g step %d: energy rose by %.2e", stage, tau, steps, rise)
            if rise > 1e-12 and tau > dt / 64:
                # step too large for the nonlinearity: undo the block and halve it
                psi = saved
                tau /= 2
                kin_prop = np.exp(-kin * tau)
                continue
            if rise > 1e-6:
                raise ConvergenceError(f"energy increased by {rise:.2e} (relative); reduce dt")
            if rise > 0:
                # round-off level rise at the finest step: converged
                psi = saved
                converged = True
                break
            history.append(e_new)
            if abs(e_new - e_old) / (scale * check_every) < stage_tol:
                converged = True
                e_old = e_new
                break
            e_old = e_new
        if not converged:
            raise ConvergenceError(f"no convergence within {max_steps} steps")

    _check_boundary(psi, grid, leak_tol)
    mu = chemical_potential(psi, V, grid, params)
    wf = Wavefunction(psi, grid, energy=history[-1], history=history, iterations=steps)
    return wf, mu


def _check_boundary(psi, grid, leak_tol):
    amp = np.abs(psi)
    peak = amp.max()
    edge = 0.0
    for ax in range(grid.dims):
        edge = max(edge, np.take(amp, 0, axis=ax).max(), np.take(amp, -1, axis=ax).max())
    if edge > leak_tol * peak:
        raise BoundaryLeakageError(
            f"|psi| at the grid boundary is {edge / peak:.2e} of its peak; enlarge the grid"
        )


def symmetric_antisymmetric_pair(V, grid: Grid, params: GpeParams, *, parity_tol=1e-6, **kw):
    """Lowest even and odd states of a (symmetrized) double well.

    Returns ``(psi_s, mu_s, psi_a, mu_a)``.
    """
    V = np.asarray(V, dtype=float)
    Vm = grid.mirror_x(V)
    asym = np.max(np.abs(V - Vm))
    span = np.ptp(V)
    if span > 0 and asym > 1e-3 * span:
        log.warning("potential is not mirror symmetric (%.2e of its span); symmetrizing", asym / span)
    Vs = 0.5 * (V + Vm)
    psi_s, mu_s = ground_state(Vs, grid, params, parity="even", **kw)
    psi_a, mu_a = ground_state(Vs, grid, params, parity="odd", **kw)
    for wf, parity in ((psi_s, "even"), (psi_a, "odd")):
        wrong = _project(wf.psi, grid, "odd" if parity == "even" else "even")
        frac = np.sum(np.abs(wrong) ** 2) / np.sum(np.abs(wf.psi) ** 2)
        if frac > parity_tol:
            raise GpeError(f"{parity} state has {frac:.2e} opposite-parity weight")
    if mu_a < mu_s:
        # numerically degenerate doublet: clamp the tiny negative splitting
        log.debug("mu_a < mu_s by %.3e J; treating as degenerate", mu_s - mu_a)
        mu_a = mu_s
    return psi_s, mu_s, psi_a, mu_a


def josephson_energy(V, grid: Grid, params: GpeParams, **kw) -> float:
    """``E_J = N (mu_a - mu_s) / 2``."""
    _, mu_s, _, mu_a = symmetric_antisymmetric_pair(V, grid, params, **kw)
    return params.n_atoms * (mu_a - mu_s) / 2


def single_well_potential(V, grid: Grid, *, wall_x: float = 0.0, side: str = "right", wall_height: float | None = None):
    """Copy of ``V`` with a hard wall replacing everything beyond ``wall_x``."""
    V = np.asarray(V, dtype=float)
    x = grid.mesh()[0]
    blocked = x < wall_x if side == "right" else x > wall_x
    if wall_height is None:
        wall_height = np.ptp(V) + const.h * 1e6
    out = V.copy()
    out[blocked] = V.min() + wall_height
    return out


def charging_energy(V, grid: Grid, params: GpeParams, delta_n: float | None = None, *,
                    wall_x: float = 0.0, **kw) -> float:
    """``E_C = 2 d mu_w / d N_w`` at ``N_w = N/2`` by a symmetric difference.

    The single well is the right half of ``V`` behind a hard wall at
    ``wall_x`` (the barrier position).
    """
    n_half = params.n_atoms / 2
    if delta_n is None:
        delta_n = max(1.0, round(0.02 * n_half))
    if not delta_n < n_half:
        raise ValueError("delta_n must be smaller than N/2")
    Vw = single_well_potential(V, grid, wall_x=wall_x)
    tol = kw.get("tol", 1e-10)
    _, mu_p = ground_state(Vw, grid, params.with_atoms(n_half + delta_n), **kw)
    _, mu_m = ground_state(Vw, grid, params.with_atoms(n_half - delta_n), **kw)
    diff = mu_p - mu_m
    floor = 1e3 * tol * max(abs(mu_p), abs(mu_m), 1e-300)
    if params.a_s > 0 and abs(diff) < floor:
        raise GpeError(
            f"chemical-potential difference {diff:.3e} J is below solver noise; increase delta_n"
        )
    return 2 * diff / (2 * delta_n)


def two_mode_parameters(V, grid: Grid, params: GpeParams, *, context=None, delta_n=None, **kw) -> TwoModeParameters:
    _, mu_s, _, mu_a = symmetric_antisymmetric_pair(V, grid, params, **kw)
    e_j = params.n_atoms * (mu_a - mu_s) / 2
    e_c = charging_energy(V, grid, params, delta_n, **kw)
    return TwoModeParameters(E_C=e_c, E_J=e_j, n_atoms=params.n_atoms, mu=mu_s, context=context)


# ---------------------------------------------------------------------------
# real-time propagation (oracle use only)


def evolve_real_time(psi0, V, grid: Grid, params: GpeParams, t_total: float, dt: float,
                     observe: Callable[[np.ndarray], float] | None = None, every: int = 1):
    """Strang split-step real-time propagation; returns ``(psi, times, values)``."""
    g = params.coupling(grid.dims)
    kin_prop = np.exp(-1j * const.hbar * grid.k_squared() / (2 * params.mass) * dt)
    psi = np.asarray(psi0, dtype=complex).copy()
    steps = int(round(t_total / dt))
    times, values = [0.0], [observe(psi) if observe else 0.0]
    for i in range(1, steps + 1):
        psi *= np.exp(-1j * (V + g * np.abs(psi) ** 2) * dt / (2 * const.hbar))
        psi = np.fft.ifftn(kin_prop * np.fft.fftn(psi))
        psi *= np.exp(-1j * (V + g * np.abs(psi) ** 2) * dt / (2 * const.hbar))
        if observe and i % every == 0:
            times.append(i * dt)
            values.append(observe(psi))
    return psi, np.array(times), np.array(values)


# ---------------------------------------------------------------------------
# closed forms used as oracles


def thomas_fermi_mu(n_atoms: float, omegas: Sequence[float], mass=const.M_RB87, a_s=const.A_S_RB87) -> float:
    """3D harmonic Thomas-Fermi chemical potential."""
    wbar = float(np.prod(omegas)) ** (1 / 3)
    abar = np.sqrt(const.hbar / (mass * wbar))
    return 0.5 * const.hbar * wbar * (15 * n_atoms * a_s / abar) ** 0.4


# ---------------------------------------------------------------------------
# potentials on grids


def quartic_grid(shape, grid: Grid) -> np.ndarray:
    from .potential import quartic_eval

    return quartic_eval(shape, grid.mesh()[0])


def layout_profile(layout, grid: Grid, center=None, yz_guess=None):
    """Transversally relaxed potential of a chip layout along x on a 1D grid.

    Returns the profile relative to its minimum.
    """
    from .potential import valley_profile

    if grid.dims != 1:
        raise ValueError("layout profiles are 1D")
    cx = 0.0 if center is None else center[0]
    guess = (0.0, 25e-6) if yz_guess is None else yz_guess
    V, _ = valley_profile(layout, grid.x + cx, guess)
    return V - V.min()


def ramp_parameters(schedule: Sequence[tuple[float, object]], solve: Callable[[object], TwoModeParameters],
                    *, cache: dict | None = None) -> "RampTable":
    """Two-mode parameters at each ``(time, context)`` step of a ramp.

    ``solve`` maps a barrier context (e.g. a splitting current or a
    :class:`~bjjsim.potential.DoubleWellShape`) to :class:`TwoModeParameters`;
    repeated contexts are served from ``cache``.
    """
    times = np.array([t for t, _ in schedule], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("schedule times must increase strictly")
    cache = {} if cache is None else cache
    rows = []
    for i, (t, ctx) in enumerate(schedule):
        key = repr(ctx)
        try:
            if key not in cache:
                cache[key] = solve(ctx)
        except GpeError as exc:
            raise type(exc)(f"ramp step {i} (t = {t:.4g} s): {exc}") from exc
        rows.append(cache[key])
    table = RampTable(times, rows)
    ej = np.array([r.E_J for r in rows])
    if np.any(np.diff(ej) > 1e-9 * max(ej.max(), 1e-300)):
        log.warning("E_J is not monotone nonincreasing along the ramp")
    return table


@dataclass
class RampTable:
    times: np.ndarray
    rows: list[TwoModeParameters]

    def __len__(self):
        return len(self.rows)

    @property
    def E_C(self):
        return np.array([r.E_C for r in self.rows])

    @property
    def E_J(self):
        return np.array([r.E_J for r in self.rows])

    def interpolate(self, t):
        """Piecewise-linear ``(E_C, E_J)`` at time(s) ``t``."""
        return np.interp(t, self.times, self.E_C), np.interp(t, self.times, self.E_J)

    def resample(self, times) -> "RampTable":
        times = np.asarray(times, dtype=float)
        ec, ej = self.interpolate(times)
        n = self.rows[0].n_atoms
        rows = [TwoModeParameters(float(c), float(j), n) for c, j in zip(ec, ej)]
        return RampTable(times, rows)
