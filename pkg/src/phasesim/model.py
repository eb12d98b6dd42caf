"""Physical and lattice configuration for the 1-D two-level medium.

All quantities are strict SI: times in seconds, lengths in meters, rates in
angular frequency (rad/s).  Unit conversions happen only here; the engines
downstream work with the dimensionless lattice amplitudes and the derived
per-cell coupling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import voigt_profile as _scipy_voigt

from . import rng as _rng

C_LIGHT = 299792458.0  # m/s


class ConfigError(ValueError):
    """Invalid physical or lattice configuration."""


@dataclass(frozen=True)
class LineshapeSpec:
    """Voigt atomic lineshape: Gaussian (inhomogeneous) convolved with
    Lorentzian (homogeneous), both widths in angular frequency."""

    center_wavelength: float          # m
    gaussian_sigma: float = 0.0       # rad/s
    lorentzian_hwhm: float = 0.0      # rad/s
    fwhm_voigt: float = 0.0           # rad/s, informational; 0 -> derived

    def __post_init__(self):
        if self.center_wavelength <= 0:
            raise ConfigError("center_wavelength must be > 0")
        if self.gaussian_sigma < 0 or self.lorentzian_hwhm < 0:
            raise ConfigError("lineshape widths must be >= 0")
        if self.gaussian_sigma == 0 and self.lorentzian_hwhm == 0:
            raise ConfigError(
                "at least one of gaussian_sigma, lorentzian_hwhm must be > 0")

    @property
    def center_omega(self) -> float:
        return 2.0 * math.pi * C_LIGHT / self.center_wavelength

    @property
    def fwhm(self) -> float:
        """Total FWHM of the profile (Olivero-Longbothum approximation,
        accurate to ~0.02%), unless an explicit value was configured."""
        if self.fwhm_voigt > 0:
            return self.fwhm_voigt
        f_g = 2.0 * math.sqrt(2.0 * math.log(2.0)) * self.gaussian_sigma
        f_l = 2.0 * self.lorentzian_hwhm
        return 0.5346 * f_l + math.sqrt(0.2166 * f_l ** 2 + f_g ** 2)


@dataclass(frozen=True)
class PulseSpec:
    """Input sech pulse: phi(tau) = (A/g_phi) sech(A (tau - tau_0))."""

    inverse_width: float                     # A, rad/s
    offset: float = 0.0                      # tau_0, s
    window: tuple[float, float] | None = None  # (tau_min, tau_max), s
    area_factor: float = 1.0                 # pulse area = area_factor * 2*pi

    def __post_init__(self):
        if self.inverse_width <= 0:
            raise ConfigError("pulse inverse_width must be > 0")
        if self.window is None:
            margin = 8.0 / self.inverse_width
            object.__setattr__(
                self, "window", (self.offset - margin, self.offset + margin))
        lo, hi = self.window
        margin = 5.0 / self.inverse_width
        if not (lo <= self.offset - margin and self.offset + margin <= hi):
            raise ConfigError(
                "pulse window must contain tau_0 with margin >= 5/A")


@dataclass(frozen=True)
class PhysicalConfig:
    """SI-unit description of one experiment."""

    g_phi: float            # m^2 s^(-1/2), 1-D atom-field coupling
    kappa: float            # 1/m, attenuation
    n_bar: float            # reservoir thermal occupation
    rho_1d: float           # 1/m, linear atomic density
    lineshape: LineshapeSpec
    pulse: PulseSpec
    z_max: float            # m
    v_g: float              # m/s

    def __post_init__(self):
        errs = []
        if self.g_phi < 0:
            errs.append("g_phi must be >= 0")
        if self.kappa < 0:
            errs.append("kappa must be >= 0")
        if self.n_bar < 0:
            errs.append("n_bar must be >= 0")
        if self.rho_1d < 0:
            errs.append("rho_1d must be >= 0")
        if self.z_max <= 0:
            errs.append("z_max must be > 0")
        if self.v_g <= 0:
            errs.append("v_g must be > 0")
        if errs:
            raise ConfigError("; ".join(errs))


@dataclass(frozen=True)
class LatticeConfig:
    """Discretized contract: tau grid, z grid, frequency classes and the
    derived per-cell quantities the engines consume."""

    n_tau: int
    d_tau: float            # s
    tau_min: float          # s
    n_z: int
    d_z: float              # m
    detunings: np.ndarray   # rad/s, one per frequency class
    weights: np.ndarray     # sum to 1
    atoms_per_cell: np.ndarray  # N_n per (z-cell, class)
    g_cell: float           # rad/s amplitude coupling, g_phi sqrt(v_g/d_z)
    gamma_cell: float       # rad/s reservoir rate, kappa * v_g
    v_g: float              # m/s

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("frequency-class weights must sum to 1")
        if np.any(w < 0):
            raise ConfigError("frequency-class weights must be >= 0")
        if not np.all(np.isfinite([self.g_cell, self.gamma_cell, self.d_tau,
                                   self.d_z])):
            raise ConfigError("derived lattice couplings must be finite")

    @property
    def tau_grid(self) -> np.ndarray:
        return self.tau_min + self.d_tau * np.arange(self.n_tau)

    @property
    def n_classes(self) -> int:
        return len(self.detunings)


def voigt_profile(omega, spec: LineshapeSpec):
    """Normalized Voigt density (units: s/rad) at angular frequency `omega`.

    `omega` is absolute; the profile is centered on spec.center_omega.
    Pure-limit shortcuts avoid the degenerate special-function calls.
    """
    omega = np.asarray(omega, dtype=float)
    if not np.all(np.isfinite(omega)):
        raise ConfigError("voigt_profile: omega must be finite")
    x = omega - spec.center_omega
    sig, gam = spec.gaussian_sigma, spec.lorentzian_hwhm
    if gam == 0.0:
        val = np.exp(-0.5 * (x / sig) ** 2) / (sig * math.sqrt(2 * math.pi))
    elif sig == 0.0:
        val = (gam / math.pi) / (x ** 2 + gam ** 2)
    else:
        val = _scipy_voigt(x, sig, gam)
    return val if val.shape else float(val)


def discretize_lineshape(spec: LineshapeSpec, n_classes: int,
                         cutoff_fwhm: float = 4.0):
    """Uniform detuning grid over +-cutoff_fwhm*FWHM with renormalized
    Voigt weights.  n_classes=1 degenerates to the sharp line (0, 1)."""
    if n_classes < 1:
        raise ConfigError("n_classes must be >= 1")
    if cutoff_fwhm <= 0:
        raise ConfigError("cutoff_fwhm must be > 0")
    if n_classes == 1:
        return np.zeros(1), np.ones(1)
    half = cutoff_fwhm * spec.fwhm
    deltas = np.linspace(-half, half, n_classes)
    w = voigt_profile(spec.center_omega + deltas, spec)
    w = np.asarray(w, dtype=float)
    total = w.sum()
    if total <= 0:
        raise ConfigError("lineshape weights vanished on the detuning grid")
    return deltas, w / total


def build_lattice(phys: PhysicalConfig, n_tau: int, n_z: int,
                  n_classes: int, cutoff_fwhm: float = 4.0) -> LatticeConfig:
    """Map the physical configuration onto the simulation lattice."""
    if n_tau < 1 or n_z < 1 or n_classes < 1:
        raise ConfigError("lattice counts must be >= 1")
    deltas, weights = discretize_lineshape(phys.lineshape, n_classes,
                                           cutoff_fwhm)
    lo, hi = phys.pulse.window
    d_tau = (hi - lo) / n_tau
    d_z = phys.z_max / n_z
    atoms = phys.rho_1d * d_z * weights
    populated = weights > 0
    if np.any(atoms[populated] < 1.0) and phys.rho_1d > 0:
        warnings.warn(
            "fewer than one atom per spatio-frequency cell; the per-cell "
            "discrete-atom picture is coarse (PPR remains valid)",
            stacklevel=2)
    g_cell = phys.g_phi * math.sqrt(phys.v_g / d_z)
    return LatticeConfig(
        n_tau=n_tau, d_tau=d_tau, tau_min=lo, n_z=n_z, d_z=d_z,
        detunings=deltas, weights=weights, atoms_per_cell=atoms,
        g_cell=g_cell, gamma_cell=phys.kappa * phys.v_g, v_g=phys.v_g)


def sech_pulse(pulse: PulseSpec, g_phi: float, grid: np.ndarray) -> np.ndarray:
    """Input photon-flux envelope of the 2*pi soliton-shaped pulse."""
    if g_phi <= 0:
        raise ConfigError("sech_pulse requires g_phi > 0")
    a = pulse.inverse_width
    amp = pulse.area_factor * a / g_phi
    return amp / np.cosh(a * (np.asarray(grid) - pulse.offset)) + 0j


def pulse_photon_number(pulse: PulseSpec, g_phi: float) -> float:
    """Analytic photon content of the sech pulse, area_factor^2 * 2A/g_phi^2."""
    return pulse.area_factor ** 2 * 2.0 * pulse.inverse_width / g_phi ** 2


def initial_atoms(lattice: LatticeConfig, method: str,
                  rng: np.random.Generator | None = None,
                  batch: int = 1) -> dict[str, np.ndarray]:
    """Fresh ground-state atomic amplitudes for one z-slice.

    PPR is deterministic (beta1 = beta1+ = sqrt(N), beta2 = beta2+ = 0);
    TWA samples the Wigner distribution with <db db*> = 1/2 per cell.
    Arrays are (batch, n_classes) complex.
    """
    root_n = np.sqrt(lattice.atoms_per_cell)[None, :]
    shape = (batch, lattice.n_classes)
    if method == "ppr":
        b1 = np.broadcast_to(root_n + 0j, shape).copy()
        zero = np.zeros(shape, dtype=complex)
        return {"b1": b1, "b1p": b1.copy(),
                "b2": zero, "b2p": zero.copy()}
    if method == "twa":
        if rng is None:
            raise ConfigError("TWA initial atoms require an rng")
        q = _rng.normal_array(rng, (batch, lattice.n_classes, 4), std=0.5)
        b1 = root_n + q[..., 0] + 1j * q[..., 1]
        b2 = (q[..., 2] + 1j * q[..., 3]).astype(complex)
        return {"b1": b1, "b2": b2}
    raise ConfigError(f"unknown method {method!r}")
