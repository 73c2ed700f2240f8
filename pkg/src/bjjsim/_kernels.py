"""Compiled inner loops (numba)."""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _step(ds, es, a, b, acc, r, n):
    # b <- 2 As a - b ; acc += r * b   (one row)
    v = 2.0 * (ds[0] * a[0] + es[0] * a[1]) - b[0]
    b[0] = v
    acc[0] += r * v
    for i in range(1, n - 1):
        v = 2.0 * (ds[i] * a[i] + es[i - 1] * a[i - 1] + es[i] * a[i + 1]) - b[i]
        b[i] = v
        acc[i] += r * v
    v = 2.0 * (ds[n - 1] * a[n - 1] + es[n - 2] * a[n - 2]) - b[n - 1]
    b[n - 1] = v
    acc[n - 1] += r * v


@njit(cache=True, fastmath=True)
def chebyshev_even_odd(d, e, center, radius, coef, x):
    """Even- and odd-order partial sums of ``sum_k coef[k] T_k(As) x``.

    ``As = (A - center) / radius`` with ``A`` real symmetric tridiagonal
    (diagonal ``d``, off-diagonal ``e``, at least two sites). ``x`` is real
    with one vector per row; ``coef`` is real.
    """
    m, n = x.shape
    ds = (d - center) / radius
    es = e / radius
    t0 = x.copy()
    t1 = np.empty_like(x)
    even = coef[0] * x
    odd = np.zeros_like(x)
    c1 = coef[1]
    for j in range(m):
        a = t0[j]
        b = t1[j]
        o = odd[j]
        b[0] = ds[0] * a[0] + es[0] * a[1]
        for i in range(1, n - 1):
            b[i] = ds[i] * a[i] + es[i - 1] * a[i - 1] + es[i] * a[i + 1]
        b[n - 1] = ds[n - 1] * a[n - 1] + es[n - 2] * a[n - 2]
        for i in range(n):
            o[i] = c1 * b[i]
    for k in range(2, coef.shape[0]):
        acc = even if k % 2 == 0 else odd
        r = coef[k]
        for j in range(m):
            _step(ds, es, t1[j], t0[j], acc[j], r, n)
        t0, t1 = t1, t0
    return even, odd


# ---------------------------------------------------------------------------
# classical-field Metropolis


@njit(cache=True)
def _field(c, phi, psi):
    nx, k = phi.shape
    for x in range(nx):
        s = 0j
        for j in range(k):
            s += phi[x, j] * c[j]
        psi[x] = s


@njit(cache=True)
def field_energy(c, eps, phi, g_dx):
    """``sum eps |c|^2 + (g dx / 2) sum_x |psi|^4``."""
    e = 0.0
    for j in range(c.shape[0]):
        e += eps[j] * (c[j].real ** 2 + c[j].imag ** 2)
    if g_dx != 0.0:
        psi = np.empty(phi.shape[0], dtype=np.complex128)
        _field(c, phi, psi)
        s = 0.0
        for x in range(psi.shape[0]):
            d = psi[x].real ** 2 + psi[x].imag ** 2
            s += d * d
        e += 0.5 * g_dx * s
    return e


@njit(cache=True)
def log_weight(table, ln_lo, ln_step, s):
    """Linear interpolation of a table uniform in ``ln s``; -inf below range."""
    if s <= 0.0:
        return -np.inf
    u = (np.log(s) - ln_lo) / ln_step
    if u < 0.0:
        return -np.inf
    i = int(u)
    if i >= table.shape[0] - 1:
        return table[table.shape[0] - 1]
    f = u - i
    return (1.0 - f) * table[i] + f * table[i + 1]


@njit(cache=True)
def pair_rotation(a0, a1, a2, a3):
    """``exp(i A)`` for ``A = a0 + a1 sx + a2 sy + a3 sz`` as (u00, u01, u10, u11)."""
    r = np.sqrt(a1 * a1 + a2 * a2 + a3 * a3)
    ph = np.cos(a0) + 1j * np.sin(a0)
    if r < 1e-300:
        return ph, 0j, 0j, ph
    cr = np.cos(r)
    sr = np.sin(r) / r
    u00 = ph * (cr + 1j * sr * a3)
    u11 = ph * (cr - 1j * sr * a3)
    u01 = ph * (1j * sr * (a1 - 1j * a2))
    u10 = ph * (1j * sr * (a1 + 1j * a2))
    return u00, u01, u10, u11


@njit(cache=True)
def metropolis_run(c, eps, phi, g_dx, beta, n_total, logw, ln_lo, ln_step, p_pair, sig_rot, sig_add,
                   n_sweeps, stride, seed, samples, energies):
    """Run ``n_sweeps`` sweeps of ``len(c)`` moves on the mode amplitudes ``c``.

    Pair moves rotate two amplitudes by a random unitary (norm conserving);
    additive moves shift one amplitude and exchange norm with a reservoir
    whose log-weight ``logw`` is tabulated against the log of the reservoir
    norm ``n_total - sum |c|^2``. Every ``stride`` sweeps the state goes to ``samples`` and its
    energy to ``energies``. Returns (pair accepted, pair tried, add accepted,
    add tried).
    """
    np.random.seed(seed)
    nx, k = phi.shape
    psi = np.empty(nx, dtype=np.complex128)
    new = np.empty(nx, dtype=np.complex128)
    _field(c, phi, psi)
    energy = field_energy(c, eps, phi, g_dx)
    n0 = 0.0
    for j in range(k):
        n0 += c[j].real ** 2 + c[j].imag ** 2
    acc_p = 0
    try_p = 0
    acc_a = 0
    try_a = 0
    stored = 0
    for sweep in range(n_sweeps):
        for _ in range(k):
            if k > 1 and np.random.random() < p_pair:
                a = np.random.randint(0, k)
                b = np.random.randint(0, k - 1)
                if b >= a:
                    b += 1
                u00, u01, u10, u11 = pair_rotation(
                    sig_rot * np.random.standard_normal(), sig_rot * np.random.standard_normal(),
                    sig_rot * np.random.standard_normal(), sig_rot * np.random.standard_normal())
                ca = u00 * c[a] + u01 * c[b]
                cb = u10 * c[a] + u11 * c[b]
                da = ca - c[a]
                db = cb - c[b]
                de = eps[a] * ((ca.real ** 2 + ca.imag ** 2) - (c[a].real ** 2 + c[a].imag ** 2)) \
                    + eps[b] * ((cb.real ** 2 + cb.imag ** 2) - (c[b].real ** 2 + c[b].imag ** 2))
                if g_dx != 0.0:
                    s = 0.0
                    for x in range(nx):
                        v = psi[x] + phi[x, a] * da + phi[x, b] * db
                        new[x] = v
                        d1 = v.real ** 2 + v.imag ** 2
                        d0 = psi[x].real ** 2 + psi[x].imag ** 2
                        s += d1 * d1 - d0 * d0
                    de += 0.5 * g_dx * s
                try_p += 1
                if de <= 0.0 or np.random.random() < np.exp(-beta * de):
                    c[a] = ca
                    c[b] = cb
                    energy += de
                    acc_p += 1
                    if g_dx != 0.0:
                        for x in range(nx):
                            psi[x] = new[x]
            elif logw.shape[0] > 1:
                a = np.random.randint(0, k)
                ca = c[a] + sig_add * (np.random.standard_normal() + 1j * np.random.standard_normal())
                da = ca - c[a]
                dn = (ca.real ** 2 + ca.imag ** 2) - (c[a].real ** 2 + c[a].imag ** 2)
                try_a += 1
                if n0 + dn > n_total:
                    continue
                de = eps[a] * dn
                if g_dx != 0.0:
                    s = 0.0
                    for x in range(nx):
                        v = psi[x] + phi[x, a] * da
                        new[x] = v
                        d1 = v.real ** 2 + v.imag ** 2
                        d0 = psi[x].real ** 2 + psi[x].imag ** 2
                        s += d1 * d1 - d0 * d0
                    de += 0.5 * g_dx * s
                lr = -beta * de + log_weight(logw, ln_lo, ln_step, n_total - n0 - dn) \
                    - log_weight(logw, ln_lo, ln_step, n_total - n0)
                if lr >= 0.0 or np.random.random() < np.exp(lr):
                    c[a] = ca
                    energy += de
                    n0 += dn
                    acc_a += 1
                    if g_dx != 0.0:
                        for x in range(nx):
                            psi[x] = new[x]
        if (sweep + 1) % stride == 0 and stored < samples.shape[0]:
            for j in range(k):
                samples[stored, j] = c[j]
            energies[stored] = energy
            stored += 1
    return acc_p, try_p, acc_a, try_a

