"""Magnetostatic double-well potentials from atom-chip wires.

Wires are finite straight segments; the trapping potential for a
weak-field-seeking state is ``V = gF mF muB |B|``. ``characterize`` locates
the minima of any potential (a :class:`ChipLayout` or a plain callable),
extracts trap frequencies from the Hessian and reduces a double well to the
quartic description ``V(x) = V_b [1 - (x/x0)^2]^2``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml
from scipy import ndimage, optimize

from . import constants as const

log = logging.getLogger(__name__)

DEFAULT_EXCLUSION_RADIUS = 0.5e-6  # m
DEFAULT_PITCH = 0.25e-6  # m
DEFAULT_HESSIAN_STEP = 10e-9  # m


class PotentialError(Exception):
    """Base class for potential-module failures."""


class SingularityError(PotentialError):
    """Field requested too close to a current-carrying wire."""


class CharacterizationError(PotentialError):
    """No usable minimum, or a minimum with a non positive-definite Hessian."""


@dataclass(frozen=True)
class WireSegment:
    start: np.ndarray  # m
    end: np.ndarray  # m
    current: float  # A
    name: str = ""

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float).reshape(3)
        end = np.asarray(self.end, dtype=float).reshape(3)
        if np.allclose(start, end, rtol=0, atol=0):
            raise ValueError("wire segment start and end coincide")
        if not np.isfinite(self.current):
            raise ValueError("wire current must be finite")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "current", float(self.current))


@dataclass(frozen=True)
class ChipLayout:
    wires: tuple[WireSegment, ...]
    bias: np.ndarray  # T
    gF_mF_product: float = 1.0

    def __post_init__(self):
        bias = np.asarray(self.bias, dtype=float).reshape(3)
        if not np.linalg.norm(bias) > 0:
            raise ValueError("bias field magnitude must be positive")
        if not self.gF_mF_product > 0:
            raise ValueError("gF_mF_product must be positive (weak-field seeker)")
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "wires", tuple(self.wires))

    def with_current(self, name: str, current: float) -> "ChipLayout":
        """Copy of the layout with every wire called ``name`` set to ``current``."""
        if not any(w.name == name for w in self.wires):
            raise KeyError(f"no wire named {name!r}")
        wires = tuple(
            dataclasses.replace(w, current=current) if w.name == name else w for w in self.wires
        )
        return dataclasses.replace(self, wires=wires)

    def scaled(self, alpha: float) -> "ChipLayout":
        """Copy with all wire currents multiplied by ``alpha`` (bias untouched)."""
        wires = tuple(dataclasses.replace(w, current=alpha * w.current) for w in self.wires)
        return dataclasses.replace(self, wires=wires)


@dataclass(frozen=True)
class DoubleWellShape:
    barrier_height: float  # J
    half_spacing: float  # m
    tilt: float = 0.0  # J, V(right minimum) - V(left minimum)

    def __post_init__(self):
        if self.barrier_height < 0:
            raise ValueError("barrier_height must be >= 0")
        if not self.half_spacing > 0:
            raise ValueError("half_spacing must be > 0")


@dataclass
class TrapCharacterization:
    minima: list[np.ndarray]
    energies: list[float]
    frequencies: list[tuple[float, ...]]  # Hz, per minimum, ordered like the axes
    shape: DoubleWellShape | None = None
    saddle: np.ndarray | None = None

    @property
    def n_minima(self) -> int:
        return len(self.minima)


# ---------------------------------------------------------------------------
# fields


def biot_savart_field(layout: ChipLayout, point, exclusion_radius: float = DEFAULT_EXCLUSION_RADIUS):
    """Magnetic field (T) of all wire segments plus the bias at ``point``.

    ``point`` may be a single 3-vector or any array of shape ``(..., 3)``.
    """
    p = np.asarray(point, dtype=float)
    shape = p.shape
    p = p.reshape(-1, 3)
    total = np.zeros_like(p)
    for wire in layout.wires:
        total += _segment_field(wire, p, exclusion_radius)
    total += layout.bias
    return total.reshape(shape)


def _segment_field(wire: WireSegment, p: np.ndarray, exclusion_radius: float) -> np.ndarray:
    l = wire.end - wire.start
    length = np.linalg.norm(l)
    u = l / length
    a = p - wire.start
    b = p - wire.end
    t = np.clip(a @ u, 0.0, length)
    closest = np.linalg.norm(a - t[:, None] * u, axis=1)
    if np.any(closest < exclusion_radius):
        i = int(np.argmin(closest))
        raise SingularityError(
            f"point {p[i]} lies {closest[i]:.3e} m from wire {wire.name or '<unnamed>'}"
        )
    if wire.current == 0.0:
        return np.zeros_like(p)
    cross = np.cross(u, a)
    d2 = np.einsum("ij,ij->i", cross, cross)
    cos1 = (a @ u) / np.linalg.norm(a, axis=1)
    cos2 = (b @ u) / np.linalg.norm(b, axis=1)
    pref = const.mu0 * wire.current / (4 * np.pi)
    return pref * cross * ((cos1 - cos2) / d2)[:, None]


def magnetic_potential(layout: ChipLayout, point, exclusion_radius: float = DEFAULT_EXCLUSION_RADIUS):
    """Potential energy (J) of the trapped state, ``gF mF muB |B|``."""
    B = biot_savart_field(layout, point, exclusion_radius)
    return layout.gF_mF_product * const.muB * np.linalg.norm(B, axis=-1)


def quartic_eval(shape: DoubleWellShape, x):
    """Quartic double well ``V_b (1 - (x/x0)^2)^2 + (tilt/2)(x/x0)``."""
    s = np.asarray(x, dtype=float) / shape.half_spacing
    return shape.barrier_height * (1.0 - s**2) ** 2 + 0.5 * shape.tilt * s


def quartic_well_frequency(shape: DoubleWellShape, mass: float = const.M_RB87) -> float:
    """Small-oscillation frequency (Hz) at either minimum of the untilted quartic."""
    curvature = 8.0 * shape.barrier_height / shape.half_spacing**2
    return np.sqrt(curvature / mass) / (2 * np.pi)


@dataclass(frozen=True)
class PitchforkRamp:
    """Normal form of a barrier raised by a splitting current.

    ``V(x; I) = a x^4 - c (I - I_b) x^2``: a single anharmonic well below
    the bifurcation current ``I_b`` and a quartic double well above it,
    with ``V_b = c^2 (I - I_b)^2 / (4a)`` and ``x0^2 = c (I - I_b) / (2a)``.
    """

    quartic: float  # a, J/m^4
    slope: float  # c, J/(m^2 A)
    bifurcation: float  # I_b, A

    def __post_init__(self):
        if not (self.quartic > 0 and self.slope > 0):
            raise ValueError("quartic and slope coefficients must be positive")

    @classmethod
    def through(cls, shape: DoubleWellShape, current: float, bifurcation: float) -> "PitchforkRamp":
        """The ramp that bifurcates at ``bifurcation`` and reaches ``shape`` at ``current``."""
        if not current > bifurcation:
            raise ValueError("the calibration current must lie above the bifurcation")
        a = shape.barrier_height / shape.half_spacing**4
        c = 2 * shape.barrier_height / shape.half_spacing**2 / (current - bifurcation)
        return cls(a, c, bifurcation)

    def shape(self, current: float) -> DoubleWellShape | None:
        d = current - self.bifurcation
        if d <= 0:
            return None
        return DoubleWellShape((self.slope * d) ** 2 / (4 * self.quartic), math.sqrt(self.slope * d / (2 * self.quartic)))

    def __call__(self, x, current: float):
        x = np.asarray(x, dtype=float)
        v = self.quartic * x**4 - self.slope * (current - self.bifurcation) * x**2
        shape = self.shape(current)
        # zero at the minimum, like quartic_eval
        return v + (shape.barrier_height if shape else 0.0)


def harmonic_potential(omegas: Sequence[float], mass: float = const.M_RB87) -> Callable:
    """Callable ``V(r) = m/2 sum_i omega_i^2 r_i^2`` over the last axis of ``r``."""
    w2 = np.asarray(omegas, dtype=float) ** 2

    def V(r):
        r = np.asarray(r, dtype=float)
        return 0.5 * mass * np.sum(w2 * r**2, axis=-1)

    return V


# ---------------------------------------------------------------------------
# characterization


def _as_callable(target) -> Callable:
    if isinstance(target, ChipLayout):
        return lambda r: magnetic_potential(target, r)
    if callable(target):
        return target
    raise TypeError("target must be a ChipLayout or a callable V(r)")


def hessian(V: Callable, r0, step: float = DEFAULT_HESSIAN_STEP) -> np.ndarray:
    """Central finite-difference Hessian of ``V`` at ``r0``."""
    r0 = np.asarray(r0, dtype=float)
    d = r0.size
    eye = np.eye(d) * step
    pts = [r0]
    for i in range(d):
        pts += [r0 + eye[i], r0 - eye[i]]
        for j in range(i + 1, d):
            pts += [r0 + eye[i] + eye[j], r0 + eye[i] - eye[j], r0 - eye[i] + eye[j], r0 - eye[i] - eye[j]]
    vals = iter(np.asarray(V(np.array(pts)), dtype=float))
    v0 = next(vals)
    H = np.zeros((d, d))
    for i in range(d):
        vp, vm = next(vals), next(vals)
        H[i, i] = (vp - 2 * v0 + vm) / step**2
        for j in range(i + 1, d):
            pp, pm, mp, mm = next(vals), next(vals), next(vals), next(vals)
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * step**2)
    return H


def _frequencies(H: np.ndarray, mass: float) -> tuple[tuple[float, ...], np.ndarray]:
    lam, vec = np.linalg.eigh(H)
    # order eigenpairs by the axis each eigenvector is closest to
    order = np.empty(len(lam), dtype=int)
    free = list(range(len(lam)))
    for axis in range(len(lam)):
        k = max(free, key=lambda c: abs(vec[axis, c]))
        order[axis] = k
        free.remove(k)
    lam = lam[order]
    freqs = tuple(float(np.sqrt(l / mass) / (2 * np.pi)) if l > 0 else float("nan") for l in lam)
    return freqs, lam


class _Scaled:
    """Wrap ``V`` in micrometre / hertz units relative to a reference point."""

    def __init__(self, V, ref_energy):
        self.V = V
        self.ref = ref_energy

    def f(self, q):
        return float((self.V(np.asarray(q) * const.UM) - self.ref) / const.h)

    def grad(self, q, eps=1e-4):
        q = np.asarray(q, dtype=float)
        pts = np.concatenate([q + eps * np.eye(q.size), q - eps * np.eye(q.size)])
        v = (np.asarray(self.V(pts * const.UM)) - self.ref) / const.h
        return (v[: q.size] - v[q.size :]) / (2 * eps)


def _refine(V, start, bounds_um, ref):
    s = _Scaled(V, ref)
    res = optimize.minimize(
        s.f, start, jac=s.grad, method="L-BFGS-B", bounds=bounds_um,
        options={"ftol": 1e-15, "gtol": 1e-9, "maxiter": 2000},
    )
    return np.asarray(res.x)


def _newton_polish(V, r, step, iters=3):
    """A few Newton steps with finite-difference derivatives (metres)."""
    for _ in range(iters):
        H = hessian(V, r, step)
        d = r.size
        pts = np.concatenate([r + step * np.eye(d), r - step * np.eye(d)])
        v = np.asarray(V(pts))
        g = (v[:d] - v[d:]) / (2 * step)
        try:
            dr = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(dr)) or np.linalg.norm(dr) > 10 * step:
            break
        r = r + dr
    return r


def characterize(
    target,
    search_box: Sequence[tuple[float, float]],
    *,
    mass: float = const.M_RB87,
    pitch: float = DEFAULT_PITCH,
    position_tol: float = 1e-9,
    hessian_step: float = DEFAULT_HESSIAN_STEP,
) -> TrapCharacterization:
    """Locate the minima of a potential inside ``search_box`` and describe them.

    Args:
        target: a :class:`ChipLayout` or a callable mapping ``(..., d)``
            positions to energies in J.
        search_box: ``d`` pairs ``(lo, hi)`` in metres; axis 0 is the
            splitting axis.
        pitch: spacing of the seeding grid.
        position_tol: minima closer than ``10 * position_tol`` are merged.

    Returns:
        TrapCharacterization with one or two minima sorted along axis 0. For
        two minima ``shape`` holds barrier height, half spacing and tilt.
    """
    V = _as_callable(target)
    box = np.asarray(search_box, dtype=float).reshape(-1, 2)
    dims = len(box)
    axes = [np.linspace(lo, hi, max(3, int(round((hi - lo) / pitch)) + 1)) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = _evaluate_chunked(V, mesh)

    is_min = vals == ndimage.minimum_filter(vals, size=3, mode="nearest")
    interior = np.zeros_like(is_min)
    interior[tuple(slice(1, -1) for _ in range(dims))] = True
    cand = np.argwhere(is_min & interior)
    if len(cand) == 0:
        raise CharacterizationError("no local minimum inside the search box")
    cand = sorted(cand, key=lambda idx: vals[tuple(idx)])[:12]

    bounds_um = [(lo / const.UM, hi / const.UM) for lo, hi in box]
    ref = float(vals[tuple(cand[0])])
    merge = 10 * position_tol
    minima: list[np.ndarray] = []

    def add(r):
        for m in minima:
            if np.linalg.norm(m - r) < merge:
                return
        minima.append(r)

    for idx in cand:
        start = np.array([axes[k][i] for k, i in enumerate(idx)]) / const.UM
        r = _refine(V, start, bounds_um, ref) * const.UM
        r = _newton_polish(V, r, hessian_step)
        if _on_boundary(r, box, pitch * 1e-3):
            continue
        H = hessian(V, r, hessian_step)
        lam, vec = np.linalg.eigh(H)
        if lam[0] <= 0:
            # converged onto a symmetric saddle: split along the soft direction
            for sign in (1.0, -1.0):
                kick = r + sign * vec[:, 0] * max(pitch, 20 * hessian_step)
                r2 = _refine(V, kick / const.UM, bounds_um, ref) * const.UM
                r2 = _newton_polish(V, r2, hessian_step)
                if not _on_boundary(r2, box, pitch * 1e-3):
                    if np.linalg.eigvalsh(hessian(V, r2, hessian_step))[0] > 0:
                        add(r2)
            continue
        add(r)

    if not minima:
        raise CharacterizationError("no interior minimum with positive-definite Hessian")
    energies = [float(V(m)) for m in minima]
    if len(minima) > 2:
        log.warning("found %d minima, keeping the two lowest", len(minima))
        keep = np.argsort(energies)[:2]
        minima = [minima[i] for i in keep]
    minima.sort(key=lambda m: m[0])
    energies = [float(V(m)) for m in minima]

    freqs = []
    for m in minima:
        H = hessian(V, m, hessian_step)
        f, lam = _frequencies(H, mass)
        if np.any(lam <= 0):
            raise CharacterizationError(f"Hessian not positive definite at {m}")
        freqs.append(f)

    out = TrapCharacterization(minima=minima, energies=energies, frequencies=freqs)
    if len(minima) == 2:
        saddle, v_saddle = _saddle(V, minima[0], minima[1], bounds_um)
        out.saddle = saddle
        out.shape = DoubleWellShape(
            barrier_height=max(v_saddle - min(energies), 0.0),
            half_spacing=abs(minima[1][0] - minima[0][0]) / 2,
            tilt=energies[1] - energies[0],
        )
    return out


def _on_boundary(r, box, tol):
    return bool(np.any(r - box[:, 0] < tol) or np.any(box[:, 1] - r < tol))


def _evaluate_chunked(V, mesh, chunk=200_000):
    flat = mesh.reshape(-1, mesh.shape[-1])
    out = np.empty(len(flat))
    for i in range(0, len(flat), chunk):
        out[i : i + chunk] = V(flat[i : i + chunk])
    return out.reshape(mesh.shape[:-1])


def _saddle(V, m1, m2, bounds_um):
    """Highest point of the transversally relaxed path between two minima."""
    dims = m1.size
    ref = float(V(m1))

    def relaxed(x):
        if dims == 1:
            r = np.array([x])
            return float(V(r)), r
        frac = (x - m1[0]) / (m2[0] - m1[0])
        guess = (m1[1:] + frac * (m2[1:] - m1[1:])) / const.UM
        s = _Scaled(lambda q: V(np.concatenate([np.full(q.shape[:-1] + (1,), x), q], axis=-1)), ref)
        res = optimize.minimize(
            s.f, guess, jac=s.grad, method="L-BFGS-B", bounds=bounds_um[1:],
            options={"ftol": 1e-15, "gtol": 1e-9},
        )
        r = np.concatenate([[x], res.x * const.UM])
        return float(V(r)), r

    res = optimize.minimize_scalar(
        lambda x: -relaxed(x)[0], bounds=(m1[0], m2[0]), method="bounded",
        options={"xatol": 1e-12},
    )
    v, r = relaxed(res.x)
    return r, v


# ---------------------------------------------------------------------------
# sweeps and profiles


@dataclass
class SweepRow:
    i2: float  # A
    barrier_height: float  # J
    frequencies: tuple[float, ...]  # Hz, right (or only) minimum
    half_spacing: float | None  # m
    tilt: float  # J
    characterization: TrapCharacterization | None = field(default=None, repr=False)


def barrier_sweep(
    layout_template: ChipLayout,
    i2_values: Sequence[float],
    search_box: Sequence[tuple[float, float]],
    *,
    wire: str = "I2",
    **characterize_kw,
) -> list[SweepRow]:
    """Characterize the trap for each current of the splitting wire."""
    i2 = np.asarray(i2_values, dtype=float)
    if np.any(np.diff(i2) < 0):
        raise ValueError("I2 values must be sorted ascending")
    rows = []
    for current in i2:
        try:
            tc = characterize(layout_template.with_current(wire, current), search_box, **characterize_kw)
        except PotentialError as exc:
            raise type(exc)(f"at I2 = {current * 1e3:.4g} mA: {exc}") from exc
        if tc.shape is None:
            rows.append(SweepRow(current, 0.0, tc.frequencies[0], None, 0.0, tc))
        else:
            rows.append(SweepRow(current, tc.shape.barrier_height, tc.frequencies[-1],
                                 tc.shape.half_spacing, tc.shape.tilt, tc))
    return rows


def find_bifurcation(layout_template, lo, hi, search_box, *, wire="I2", tol=1e-6, **kw) -> float:
    """Bisect for the splitting-wire current where one minimum becomes two."""
    def n_min(i):
        return characterize(layout_template.with_current(wire, i), search_box, **kw).n_minima

    if n_min(lo) != 1 or n_min(hi) != 2:
        raise ValueError("bracket must go from a single to a double well")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if n_min(mid) == 1:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def valley_profile(layout_or_V, x, yz_guess, *, step=20e-9, iters=8) -> tuple[np.ndarray, np.ndarray]:
    """Potential along ``x`` relaxed over the transverse coordinates.

    Returns ``(V, yz)`` where ``yz`` holds the transverse position of the
    valley floor for each ``x``. Vectorized Newton iteration in (y, z).
    """
    V = _as_callable(layout_or_V)
    x = np.asarray(x, dtype=float)
    yz = np.tile(np.asarray(yz_guess, dtype=float), (x.size, 1))
    e = np.eye(2) * step

    def ev(q):
        return V(np.column_stack([x, q]))

    for _ in range(iters):
        v0 = ev(yz)
        vp = [ev(yz + e[i]) for i in range(2)]
        vm = [ev(yz - e[i]) for i in range(2)]
        vpp = ev(yz + e[0] + e[1])
        vpm = ev(yz + e[0] - e[1])
        vmp = ev(yz - e[0] + e[1])
        vmm = ev(yz - e[0] - e[1])
        g = np.column_stack([(vp[i] - vm[i]) / (2 * step) for i in range(2)])
        hyy = (vp[0] - 2 * v0 + vm[0]) / step**2
        hzz = (vp[1] - 2 * v0 + vm[1]) / step**2
        hyz = (vpp - vpm - vmp + vmm) / (4 * step**2)
        det = hyy * hzz - hyz**2
        ok = (det > 0) & (hyy > 0)
        dy = np.where(ok, -(hzz * g[:, 0] - hyz * g[:, 1]) / np.where(ok, det, 1), 0.0)
        dz = np.where(ok, -(hyy * g[:, 1] - hyz * g[:, 0]) / np.where(ok, det, 1), 0.0)
        d = np.column_stack([dy, dz])
        d = np.clip(d, -1e-6, 1e-6)
        yz = yz + d
    return ev(yz), yz


# ---------------------------------------------------------------------------
# layout files


def load_layout(path) -> ChipLayout:
    """Read a YAML layout file (positions in um, currents in mA, bias in G)."""
    data = yaml.safe_load(Path(path).read_text())
    return layout_from_dict(data)


def layout_from_dict(data: dict) -> ChipLayout:
    wires = [
        WireSegment(
            start=np.asarray(w["start_um"], dtype=float) * const.UM,
            end=np.asarray(w["end_um"], dtype=float) * const.UM,
            current=float(w["current_mA"]) * const.MA,
            name=str(w.get("name", "")),
        )
        for w in data["wires"]
    ]
    return ChipLayout(
        wires=tuple(wires),
        bias=np.asarray(data["bias_G"], dtype=float) * const.GAUSS,
        gF_mF_product=float(data.get("moment_factor", 1.0)),
    )


def layout_to_dict(layout: ChipLayout) -> dict:
    return {
        "moment_factor": layout.gF_mF_product,
        "bias_G": (layout.bias / const.GAUSS).tolist(),
        "wires": [
            {
                "name": w.name,
                "start_um": (w.start / const.UM).tolist(),
                "end_um": (w.end / const.UM).tolist(),
                "current_mA": w.current / const.MA,
            }
            for w in layout.wires
        ],
    }


def default_layout_path() -> Path:
    return Path(__file__).parent / "configs" / "chip_layout.yaml"


def default_layout() -> ChipLayout:
    """The shipped stand-in chip layout (I0 = 100 mA, I1 = 2 mA, I2 = 0)."""
    return load_layout(default_layout_path())


DEFAULT_SEARCH_BOX = ((-12e-6, 12e-6), (-3e-6, 3e-6), (19e-6, 31e-6))
