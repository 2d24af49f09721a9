"""Physical constants in the package unit system (fs, rad/fs, C*m, V/m)."""

import math

HBAR = 1.054571817e-34  # J*s
C_SI = 299792458.0  # m/s
C_NM_PER_FS = 299.792458
EPS0 = 8.8541878128e-12  # F/m

FS = 1e-15  # s per fs


def wavelength_to_omega(wavelength_nm):
    """Angular frequency in rad/fs for a vacuum wavelength in nm."""
    return 2.0 * math.pi * C_NM_PER_FS / wavelength_nm


def omega_to_wavelength(omega):
    """Vacuum wavelength in nm for an angular frequency in rad/fs."""
    return 2.0 * math.pi * C_NM_PER_FS / omega


def rabi_per_fs(dipole, field):
    """Rabi frequency mu*E/hbar in rad/fs for dipole in C*m and field in V/m."""
    return dipole * field / HBAR * FS
