"""Two-mode (bosonic Josephson junction) model on the Fock ladder.

Basis ``|n>``, ``n = (N_L - N_R)/2 = -N/2 ... N/2``. The Hamiltonian is

    H = (E_C/2) n^2 + dE n - (E_J/N) (a_L^+ a_R + a_R^+ a_L)

so that the mean-field limit reads ``(E_C/2) n^2 - E_J cos(phi)`` and
equipartition gives ``<n^2> = k_B T / E_C``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, special

from . import constants as const
from ._kernels import chebyshev_even_odd

log = logging.getLogger(__name__)


class StepSizeError(ValueError):
    pass


def even_atoms(n: int) -> int:
    """Round an atom number down to the nearest even value."""
    n = int(n)
    return n - (n % 2)


@dataclass(frozen=True)
class TwoModeSystem:
    n_atoms: int
    E_C: float
    E_J: float
    delta_E: float = 0.0

    def __post_init__(self):
        if self.n_atoms < 2 or self.n_atoms % 2:
            raise ValueError("n_atoms must be even and >= 2 (see even_atoms)")
        if self.E_C < 0 or self.E_J < 0:
            raise ValueError("E_C and E_J must be >= 0")

    @property
    def ladder(self) -> np.ndarray:
        half = self.n_atoms // 2
        return np.arange(-half, half + 1, dtype=float)


def hopping_amplitudes(n_atoms: int) -> np.ndarray:
    """``sqrt((N/2 - n)(N/2 + n + 1))`` coupling ``|n>`` to ``|n+1>``."""
    half = n_atoms / 2
    n = np.arange(-half, half)
    return np.sqrt((half - n) * (half + n + 1))


def hamiltonian_bands(system: TwoModeSystem) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and first off-diagonal of the Hamiltonian (J)."""
    n = system.ladder
    diag = 0.5 * system.E_C * n**2 + system.delta_E * n
    off = -(system.E_J / system.n_atoms) * hopping_amplitudes(system.n_atoms)
    return diag, off


def build_hamiltonian(system: TwoModeSystem) -> np.ndarray:
    """Dense Hermitian tridiagonal Hamiltonian matrix."""
    diag, off = hamiltonian_bands(system)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


@dataclass
class FockDensityMatrix:
    data: np.ndarray
    n_atoms: int
    # optional spectral decomposition rho = V diag(w) V^+, columns of V
    components: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def ladder(self) -> np.ndarray:
        half = self.n_atoms // 2
        return np.arange(-half, half + 1, dtype=float)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.data, self.data)))

    @property
    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def validate(self, trace_tol=1e-10, herm_tol=1e-12, eig_tol=1e-10):
        if self.data.shape != (self.n_atoms + 1,) * 2:
            raise ValueError("density matrix dimension must be N + 1")
        if abs(self.trace - 1) > trace_tol:
            raise ValueError(f"trace {self.trace} != 1")
        if self.hermiticity_error > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if np.linalg.eigvalsh(self.data).min() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")
        return self

    @classmethod
    def from_components(cls, weights, vectors, n_atoms, offset=0):
        """Build ``sum_k w_k |v_k><v_k|``; ``vectors`` may span a window of the
        ladder starting at index ``offset``."""
        dim = n_atoms + 1
        vw = vectors * weights
        sub = vw @ vectors.conj().T
        data = np.zeros((dim, dim), dtype=complex)
        m = vectors.shape[0]
        data[offset : offset + m, offset : offset + m] = sub
        return cls(data, n_atoms)

    @classmethod
    def fock(cls, n_atoms, n):
        dim = n_atoms + 1
        data = np.zeros((dim, dim), dtype=complex)
        i = int(n + n_atoms // 2)
        data[i, i] = 1.0
        return cls(data, n_atoms)


def thermal_state(system: TwoModeSystem, T: float) -> FockDensityMatrix:
    """``exp(-H / k_B T) / Z``; ``T = 0`` gives the ground-state projector."""
    if T < 0:
        raise ValueError("temperature must be >= 0")
    diag, off = hamiltonian_bands(system)
    E, vecs = linalg.eigh_tridiagonal(diag, off)
    if T == 0:
        w = np.zeros_like(E)
        w[0] = 1.0
    else:
        # shift by the ground energy so the largest exponent is zero
        w = np.exp(-(E - E[0]) / (const.kB * T))
        w /= w.sum()
    keep = w > 1e-16 * w.max()
    rho = FockDensityMatrix.from_components(w[keep], vecs[:, keep].astype(complex), system.n_atoms)
    rho.data = 0.5 * (rho.data + rho.data.conj().T)
    rho.components = (w[keep], vecs[:, keep].astype(complex))
    return rho


def energy_expectation(rho: FockDensityMatrix, system: TwoModeSystem) -> float:
    diag, off = hamiltonian_bands(system)
    d = np.real(np.diag(rho.data))
    sub = np.real(np.diag(rho.data, -1))
    return float(np.dot(diag, d) + 2 * np.dot(off, sub))


# ---------------------------------------------------------------------------
# ramps and evolution


@dataclass
class RampSchedule:
    times: np.ndarray  # s
    E_C: np.ndarray
    E_J: np.ndarray
    delta_E: np.ndarray | None = None
    interpolation: str = "linear"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.E_C = np.asarray(self.E_C, dtype=float)
        self.E_J = np.asarray(self.E_J, dtype=float)
        self.delta_E = np.zeros_like(self.times) if self.delta_E is None else np.asarray(self.delta_E, dtype=float)
        if self.interpolation != "linear":
            raise ValueError("only piecewise-linear interpolation is supported")
        if len(self.times) < 1 or any(len(a) != len(self.times) for a in (self.E_C, self.E_J, self.delta_E)):
            raise ValueError("schedule arrays must have equal, nonzero length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("schedule times must increase strictly")
        if not all(np.all(np.isfinite(a)) for a in (self.E_C, self.E_J, self.delta_E)):
            raise ValueError("schedule values must be finite")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def at(self, t: float) -> tuple[float, float, float]:
        return (float(np.interp(t, self.times, self.E_C)),
                float(np.interp(t, self.times, self.E_J)),
                float(np.interp(t, self.times, self.delta_E)))

    def system(self, n_atoms: int, t: float) -> TwoModeSystem:
        ec, ej, de = self.at(t)
        return TwoModeSystem(n_atoms, max(ec, 0.0), max(ej, 0.0), de)

    @classmethod
    def constant(cls, system: TwoModeSystem, duration: float) -> "RampSchedule":
        return cls([0.0, duration], [system.E_C] * 2, [system.E_J] * 2, [system.delta_E] * 2)

    @classmethod
    def linear_in_time(cls, nodes_E_C, nodes_E_J, duration, nodes_delta_E=None) -> "RampSchedule":
        """Spread parameter nodes uniformly over ``[0, duration]``."""
        k = len(nodes_E_C)
        times = np.linspace(0.0, duration, k)
        return cls(times, nodes_E_C, nodes_E_J, nodes_delta_E)


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[FockDensityMatrix]

    @property
    def final(self) -> FockDensityMatrix:
        return self.states[-1]


_CF4_C = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)
_CF4_A = ((3 - 2 * math.sqrt(3)) / 12, (3 + 2 * math.sqrt(3)) / 12)


def _expm_apply(diag, off, tau, psi):
    """``exp(-i tau A) psi`` for real symmetric tridiagonal ``A`` (Chebyshev).

    ``psi`` holds one state per row.
    """
    if len(diag) == 1:
        return np.exp(-1j * tau * diag[0]) * psi
    ab = np.abs(off)
    rad = np.zeros_like(diag)
    rad[:-1] += ab
    rad[1:] += ab
    lo, hi = float(np.min(diag - rad)), float(np.max(diag + rad))
    center = 0.5 * (hi + lo)
    radius = max(0.5 * (hi - lo), 1e-300)
    z = tau * radius
    kmax = int(z + 12 * max(z, 1.0) ** (1 / 3) + 20)
    k = np.arange(kmax)
    jk = special.jv(k, z)
    small = np.nonzero((k > z) & (np.abs(jk) < 1e-16))[0]
    if len(small):
        kmax = int(small[0]) + 1
        k, jk = k[:kmax], jk[:kmax]
    # (-i)^k is real for even k and -i times a real sign for odd k
    coef = (-1.0) ** (k // 2) * jk * np.where(k == 0, 1.0, 2.0)
    m = psi.shape[0]
    x = np.ascontiguousarray(np.concatenate([psi.real, psi.imag]))
    even, odd = chebyshev_even_odd(diag, off, center, radius, coef, x)
    res = (even[:m] + odd[m:]) + 1j * (even[m:] - odd[:m])
    return np.exp(-1j * tau * center) * res


def _bands_window(schedule, n_atoms, t, lo, hi):
    ec, ej, de = schedule.at(t)
    half = n_atoms // 2
    n = np.arange(-half, half + 1, dtype=float)[lo:hi]
    diag = (0.5 * ec * n**2 + de * n) / const.hbar
    off = -(ej / n_atoms) * hopping_amplitudes(n_atoms)[lo : hi - 1] / const.hbar
    return diag, off


def _decompose(rho: FockDensityMatrix, weight_floor: float):
    if rho.components is not None:
        w, v = rho.components
    else:
        w, v = np.linalg.eigh(rho.data)
    w = np.real(np.asarray(w))
    # drop the smallest components while their summed weight stays below the floor
    order = np.argsort(w)
    dropped = np.cumsum(np.clip(w[order], 0, None))
    n_drop = int(np.searchsorted(dropped, weight_floor, side="right"))
    keep = np.sort(order[n_drop:])
    w = w[keep]
    return w / w.sum(), np.asarray(v[:, keep], dtype=complex)


def evolve(
    rho: FockDensityMatrix,
    schedule: RampSchedule,
    dt: float,
    *,
    t_end: float | None = None,
    record_times: Sequence[float] | None = None,
    weight_floor: float = 1e-10,
    window_pad: int = 24,
    edge_tol: float = 1e-12,
) -> Trajectory:
    """Von Neumann evolution ``i hbar drho/dt = [H(t), rho]`` along a ramp.

    The density matrix is propagated through its spectral decomposition
    (each component evolves as a pure state), with a fourth-order
    commutator-free Magnus step whose exponentials are evaluated to machine
    precision by Chebyshev expansion. Work is restricted to the window of the
    ladder the state occupies; the window is widened automatically if weight
    reaches its edges.

    Args:
        dt: step (s); must satisfy ``dt <= 0.1 hbar / sigma_E`` with
            ``sigma_E`` the energy spread of ``rho`` under the initial
            Hamiltonian.
        t_end: end of evolution, default the schedule end.
        record_times: times to store; default only the final state.
    """
    n_atoms = rho.n_atoms
    t0 = float(schedule.times[0])
    t_end = float(schedule.times[-1]) if t_end is None else float(t_end)
    if t_end > schedule.times[-1] + 1e-15 or t_end < t0:
        raise ValueError("requested evolution extends beyond the schedule")
    h0 = schedule.system(n_atoms, t0)
    spread = _energy_spread(rho, h0)
    if spread > 0 and dt > 0.1 * const.hbar / spread:
        raise StepSizeError(
            f"dt = {dt:.3e} s exceeds 0.1 hbar / sigma_E = {0.1 * const.hbar / spread:.3e} s"
        )
    record = sorted(set([t_end] if record_times is None else [float(t) for t in record_times]))
    if record and (record[0] < t0 - 1e-15 or record[-1] > t_end + 1e-15):
        raise ValueError("record times outside the evolution interval")

    w, vecs = _decompose(rho, weight_floor)
    pad = window_pad
    while True:
        try:
            return _run(w, vecs, schedule, n_atoms, t0, t_end, dt, record, edge_tol, pad)
        except _WindowTooSmall:
            pad *= 4
            log.info("weight reached the Fock window edge; retrying with padding %d", pad)


class _WindowTooSmall(Exception):
    pass


def _window(psi_rows, w, lo, pad, dim):
    """Occupied ladder range of the state plus ``pad`` sites each side."""
    wt = w @ (np.abs(psi_rows) ** 2)
    occ = np.nonzero(wt > 1e-20 * wt.max())[0]
    return max(0, lo + int(occ[0]) - pad), min(dim, lo + int(occ[-1]) + 1 + pad)


def _run(w, vecs, schedule, n_atoms, t0, t_end, dt, record, edge_tol, pad, rewindow_every=50):
    dim = n_atoms + 1
    if 2 * pad >= dim:
        lo, hi = 0, dim
    else:
        lo, hi = _window(vecs.T, w, 0, pad, dim)
    psi = np.ascontiguousarray(vecs[lo:hi, :].T)
    edge = max(1, pad // 4)
    n_steps = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
    grid = np.linspace(t0, t_end, n_steps + 1)
    times, states = [], []
    rec = list(record)

    def check():
        # weight near a truncated edge means the window was too small
        wt = w @ np.abs(psi) ** 2
        if (lo > 0 and wt[:edge].sum() > edge_tol) or (hi < dim and wt[-edge:].sum() > edge_tol):
            raise _WindowTooSmall

    def snapshot(t):
        states.append(FockDensityMatrix.from_components(w, psi.T, n_atoms, offset=lo))
        times.append(t)

    while rec and rec[0] <= t0 + 1e-15:
        snapshot(t0)
        rec.pop(0)
    for i in range(n_steps):
        ta, tb = grid[i], grid[i + 1]
        # split the step at record times that fall inside it
        cuts = [ta] + [t for t in rec if ta < t < tb - 1e-15] + [tb]
        for a, b in zip(cuts[:-1], cuts[1:]):
            psi = _cf4_step(psi, schedule, n_atoms, lo, hi, a, b - a)
            while rec and rec[0] <= b + 1e-15:
                check()
                snapshot(b)
                rec.pop(0)
        if (i + 1) % rewindow_every == 0 and (lo > 0 or hi < dim):
            check()
            new_lo, new_hi = _window(psi, w, lo, pad, dim)
            # only shrink; growth is handled by the restart
            new_lo, new_hi = max(new_lo, lo), min(new_hi, hi)
            if (new_lo - lo) + (hi - new_hi) >= pad // 2 and new_hi - new_lo > 2:
                psi = np.ascontiguousarray(psi[:, new_lo - lo : new_hi - lo])
                lo, hi = new_lo, new_hi
    check()
    return Trajectory(np.array(times), states)


def _cf4_step(psi, schedule, n_atoms, lo, hi, t, h):
    d1, o1 = _bands_window(schedule, n_atoms, t + _CF4_C[0] * h, lo, hi)
    d2, o2 = _bands_window(schedule, n_atoms, t + _CF4_C[1] * h, lo, hi)
    a1, a2 = _CF4_A
    psi = _expm_apply((a2 * d1 + a1 * d2), (a2 * o1 + a1 * o2), h, psi)
    psi = _expm_apply((a1 * d1 + a2 * d2), (a1 * o1 + a2 * o2), h, psi)
    return psi


def _band_matmul(diag, off, M):
    # H @ M for symmetric tridiagonal H
    out = diag[:, None] * M
    out[:-1] += off[:, None] * M[1:]
    out[1:] += off[:, None] * M[:-1]
    return out


def _energy_spread(rho, system):
    diag, off = hamiltonian_bands(system)
    hr = _band_matmul(diag, off, rho.data)
    e1 = np.real(np.trace(hr))
    e2 = np.real(np.trace(_band_matmul(diag, off, hr)))
    return math.sqrt(max(e2 - e1**2, 0.0))


# ---------------------------------------------------------------------------
# observables


@dataclass
class TwoModeObservables:
    mean_n: float
    mean_n2: float
    xi2: float
    coherence: float
    plasma_frequency: float  # rad/s
    metrology_gain_db: float
    phase_spreading_rate: float  # rad/s, up to a dimensionless prefactor

    @property
    def xi2_db(self) -> float:
        return squeezing_db(self.xi2)


def coherence(rho: FockDensityMatrix) -> float:
    """``<cos phi> = <a_L^+ a_R + a_R^+ a_L> / N``."""
    sub = np.diag(rho.data, -1)
    return float(2 * np.real(np.dot(hopping_amplitudes(rho.n_atoms), sub)) / rho.n_atoms)


def number_moments(rho: FockDensityMatrix) -> tuple[float, float]:
    p = np.real(np.diag(rho.data))
    n = rho.ladder
    return float(p @ n), float(p @ n**2)


def observables(rho: FockDensityMatrix, system: TwoModeSystem) -> TwoModeObservables:
    if rho.n_atoms != system.n_atoms:
        raise ValueError("density matrix and system have different N")
    m1, m2 = number_moments(rho)
    n = system.n_atoms
    xi2 = 4 * (m2 - m1**2) / n
    coh = coherence(rho)
    gain = metrology_gain_db(xi2, coh) if xi2 > 0 and coh != 0 else float("nan")
    return TwoModeObservables(
        mean_n=m1,
        mean_n2=m2,
        xi2=xi2,
        coherence=coh,
        plasma_frequency=plasma_frequency(system.E_C, system.E_J),
        metrology_gain_db=gain,
        phase_spreading_rate=phase_spreading_rate(xi2, n, system.E_C),
    )


def plasma_frequency(E_C: float, E_J: float) -> float:
    """``sqrt(E_C E_J) / hbar`` (rad/s); the Rabi-regime correction is omitted."""
    return math.sqrt(E_C * E_J) / const.hbar


def metrology_gain_db(xi2: float, coherence: float) -> float:
    return 10 * math.log10(xi2 / coherence**2)


def phase_spreading_rate(xi2: float, n_atoms: float, E_C: float) -> float:
    """``xi sqrt(N) E_C / hbar``; the true rate carries an unknown O(1) prefactor."""
    return math.sqrt(max(xi2, 0.0) * n_atoms) * E_C / const.hbar


def extended_xi2(n_atoms: float, E_C: float, T: float, n2m: float) -> float:
    """Two-mode equipartition plus a binomial thermal-cloud term.

    ``xi^2 = 4 k_B T / (N E_C) + 1 - N_2m / N``
    """
    if not 0 <= n2m <= n_atoms:
        raise ValueError("N_2m must lie in [0, N]")
    if not E_C > 0:
        raise ValueError("E_C must be positive")
    return 4 * const.kB * T / (n_atoms * E_C) + 1 - n2m / n_atoms


def squeezing_db(xi2: float) -> float:
    if not xi2 > 0:
        raise ValueError("xi^2 must be positive to express in dB")
    return 10 * math.log10(xi2)


def xi2_from_db(db: float) -> float:
    return 10 ** (db / 10)


def binomial_state(n_atoms: int) -> FockDensityMatrix:
    """Pure binomial (phase state, ``phi = 0``) as a density matrix."""
    k = np.arange(n_atoms + 1)
    logc = special.gammaln(n_atoms + 1) - special.gammaln(k + 1) - special.gammaln(n_atoms - k + 1)
    amp = np.exp(0.5 * (logc - n_atoms * math.log(2)))
    amp = amp.astype(complex)[:, None]
    rho = FockDensityMatrix.from_components(np.array([1.0]), amp, n_atoms)
    rho.components = (np.array([1.0]), amp)
    return rho
