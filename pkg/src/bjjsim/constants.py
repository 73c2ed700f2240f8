"""Physical constants (SI) shared by every module."""

from scipy import constants as _c

hbar = _c.hbar
h = _c.h
kB = _c.k
mu0 = _c.mu_0
muB = _c.physical_constants["Bohr magneton"][0]

# 87Rb
M_RB87 = 1.44316e-25  # kg
A_S_RB87 = 5.24e-9  # m, |F=2, m_F=2> triplet scattering length

# 87Rb D2 line, cycling transition
SIGMA_D2 = 2.907e-13  # m^2, resonant cross section 3 lambda^2 / 2 pi
GAMMA_D2 = 2 * 3.141592653589793 * 6.07e6  # rad/s

GAUSS = 1e-4  # T
UM = 1e-6  # m
MA = 1e-3  # A


def hz(energy):
    """Express an energy in J as a frequency E/h in Hz."""
    return energy / h


def joule(freq_hz):
    """Inverse of :func:`hz`."""
    return freq_hz * h
