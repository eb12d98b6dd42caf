"""Positive-P drift and noise kernels on the doubled phase space.

Variables per spatio-frequency cell: (beta1, beta1+, beta2, beta2+), with
the field pair (phi, phi+).  The '+' partners are independent variables,
not conjugates.  Noise enters through the explicit per-cell factorization
of the block diffusion matrix; beta2 and beta2+ receive no direct noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .model import LatticeConfig

# variable order used by the per-cell noise matrices
VAR_ORDER = ("alpha", "alpha_plus", "beta1", "beta1_plus", "beta2",
             "beta2_plus")


def ppr_atomic_drift(b1, b1p, b2, b2p, a, ap, delta, g,
                     conjugate_fix: bool = True):
    """Ito drift of one cell's doubled atomic amplitudes.

    (a, ap) is the flux-converted local field pair (g*a has units rad/s).
    `conjugate_fix=False` selects the literal published beta2+ line, which
    breaks per-cell number conservation and exists only for tests.
    """
    db1 = -1j * g * ap * b2 - 0.5j * delta * b1
    db1p = 1j * g * a * b2p + 0.5j * delta * b1p
    db2 = -1j * g * a * b1 + 0.5j * delta * b2
    if conjugate_fix:
        db2p = 1j * g * ap * b1p - 0.5j * delta * b2p
    else:
        db2p = 1j * g * ap * b2p - 0.5j * delta * b2p
    return db1, db1p, db2, db2p


def ppr_field_drift(phi, phi_plus, r_minus, r_plus, kappa, g_phi, rho_1d,
                    weights):
    """d(phi)/dz and d(phi+)/dz from loss and the polarization fields.

    r_minus / r_plus have shape (..., n_classes): R- = (1/N) beta1+ beta2
    and its doubled mirror R+ = (1/N) beta2+ beta1 per frequency class.
    This normalization, together with the atomic drive g_phi*phi, makes
    the field-atom exchange photon conserving and gives the sech input
    its stated 2*pi Bloch area.
    """
    w = np.asarray(weights)
    src = np.tensordot(r_minus, w, axes=([-1], [0]))
    src_p = np.tensordot(r_plus, w, axes=([-1], [0]))
    dphi = -0.5 * kappa * phi - 1j * g_phi * rho_1d * src
    dphi_p = -0.5 * kappa * phi_plus + 1j * g_phi * rho_1d * src_p
    return dphi, dphi_p


def diffusion_matrix(b2, b2p, g, gamma, n_bar) -> np.ndarray:
    """Per-cell 6x6 diffusion block D_n in VAR_ORDER."""
    d = np.zeros((6, 6), dtype=complex)
    d[0, 1] = d[1, 0] = gamma * n_bar
    d[0, 2] = d[2, 0] = -1j * g * b2
    d[1, 3] = d[3, 1] = 1j * g * b2p
    return d


def build_noise_block(b2, b2p, g, gamma, n_bar) -> np.ndarray:
    """Per-cell 6x6 noise matrix B_n with B_n B_n^T = D_n.

    Columns are the six real Wiener channels (two reservoir, four
    interaction); complex square roots take the principal branch.
    """
    r = math.sqrt(gamma * n_bar / 2.0) if gamma * n_bar > 0 else 0.0
    c = np.sqrt(-0.5j * g * b2 + 0j)
    cp = np.sqrt(0.5j * g * b2p + 0j)
    b = np.zeros((6, 6), dtype=complex)
    b[0, 0], b[0, 1] = r, 1j * r
    b[1, 0], b[1, 1] = r, -1j * r
    b[0, 2], b[0, 3] = c, 1j * c
    b[2, 2], b[2, 3] = c, -1j * c
    b[1, 4], b[1, 5] = cp, 1j * cp
    b[3, 4], b[3, 5] = cp, -1j * cp
    return b


def sample_cell_noise(b2, b2p, g, gamma, n_bar, dt, gen, n_samples):
    """Draw `n_samples` per-cell Ito noise vectors (columns in VAR_ORDER)
    for a frozen state, for the covariance cross-checks."""
    b = build_noise_block(b2, b2p, g, gamma, n_bar)
    eta = _rng.normal_array(gen, (n_samples, 6), std=math.sqrt(dt))
    return eta @ b.T


@dataclass(frozen=True)
class NoiseScaling:
    """Grid multipliers turning the continuum delta-correlated processes
    into per-step increments (see spec of the scheme in the propagator)."""

    reservoir_std: float      # per real component, per (tau sample, z step)
    shared_weight: float      # field-side weight on the shared increments
    atom_dt: float            # variance of one atomic Wiener increment


def interaction_noise_scaling(lattice: LatticeConfig, kappa: float,
                              n_bar: float, ordering_s: float = 0.0,
                              tau_substeps: int = 1) -> NoiseScaling:
    """Discretization multipliers for the PPR/TWA noise channels.

    Reservoir field noise per (tau sample, z step) has complex variance
    kappa*(n_bar + s)*d_z/d_tau.  The shared field-atom increments carry
    weight sqrt(d_z/(v_g*d_tau*n_sub)) on the field side so the discrete
    covariance converges to the continuum correlator for any grid.
    """
    var = kappa * (n_bar + ordering_s) * lattice.d_z / lattice.d_tau
    res_std = math.sqrt(0.5 * var) if var > 0 else 0.0
    shared = math.sqrt(
        lattice.d_z / (lattice.v_g * lattice.d_tau * tau_substeps))
    return NoiseScaling(reservoir_std=res_std, shared_weight=shared,
                        atom_dt=lattice.d_tau / tau_substeps)


class PprKernel:
    """One-trajectory-batch positive-P propagation kernels."""

    method = "ppr"
    ordering_s = 0.0

    def __init__(self, lattice: LatticeConfig, g_phi: float, kappa: float,
                 n_bar: float, tau_substeps: int = 1, noise: bool = True,
                 gauge_x: float = 1.0, conjugate_fix: bool = True,
                 divergence_bound: float = 1e6, stiff_exact: bool = False):
        self.lattice = lattice
        self.g_phi = g_phi
        self.kappa = kappa
        self.n_bar = n_bar
        self.nsub = max(1, tau_substeps)
        self.noise = noise
        self.gauge_x = gauge_x
        self.conjugate_fix = conjugate_fix
        self.stiff_exact = stiff_exact
        self.scaling = interaction_noise_scaling(
            lattice, kappa, n_bar, self.ordering_s, self.nsub)
        self._div_bound = divergence_bound
        root_n = math.sqrt(max(np.max(lattice.atoms_per_cell, initial=0.0),
                               1.0))
        self.bound = divergence_bound * root_n

    def initial_field(self, phi0: np.ndarray, batch: int, gen):
        """Deterministic coherent input; doubled partner starts conjugate."""
        phi = np.broadcast_to(phi0, (batch, phi0.size)).astype(complex).copy()
        return {"phi": phi, "phi_plus": phi.conj()}

    def set_bound_from_field(self, phi0: np.ndarray) -> None:
        scale = max(1.0, float(np.abs(phi0).max()),
                    math.sqrt(max(np.max(self.lattice.atoms_per_cell,
                                         initial=0.0), 1.0)))
        self.bound = self._div_bound * scale

    def _classical_sweep(self, phi, phi_p):
        """Noise-free tau sweep of one atomic slice with the interaction
        integrated as an exact rotation per substep (piecewise-constant
        field); returns the trapezoid-averaged polarization sources and
        the slice-end excitation."""
        lat = self.lattice
        batch = phi.shape[0]
        nnu = lat.n_classes
        dts = self.scaling.atom_dt
        gd = self.g_phi
        rot = np.exp(-0.5j * lat.detunings[None, :] * dts)
        root_n = np.sqrt(lat.atoms_per_cell)[None, :]
        b1 = np.broadcast_to(root_n + 0j, (batch, nnu)).copy()
        b1p = b1.copy()
        b2 = np.zeros((batch, nnu), dtype=complex)
        b2p = np.zeros((batch, nnu), dtype=complex)
        src = np.empty_like(phi)
        src_p = np.empty_like(phi)
        for i in range(lat.n_tau):
            uu = gd * phi[:, i:i + 1]
            uup = gd * phi_p[:, i:i + 1]
            r = np.sqrt(uu * uup)
            cs = np.cos(r * dts)
            sn = -1j * np.sinc(r * dts / math.pi) * dts
            acc = 0.5 * (b1p * b2).sum(axis=1)
            acc_p = 0.5 * (b2p * b1).sum(axis=1)
            for k in range(self.nsub):
                b1, b2 = cs * b1 + sn * uup * b2, cs * b2 + sn * uu * b1
                b1p, b2p = (cs * b1p - sn * uu * b2p,
                            cs * b2p - sn * uup * b1p)
                b1 = b1 * rot
                b1p = b1p * rot.conj()
                b2 = b2 * rot.conj()
                b2p = b2p * rot
                w = 0.5 if k == self.nsub - 1 else 1.0
                acc = acc + w * (b1p * b2).sum(axis=1)
                acc_p = acc_p + w * (b2p * b1).sum(axis=1)
            src[:, i] = acc / self.nsub
            src_p[:, i] = acc_p / self.nsub
        return src, src_p, (b2p * b2).sum(axis=1)

    def _classical_slice(self, field: dict, alive: np.ndarray,
                         record_excitation: bool):
        """One z step of the noise-free field map with a midpoint
        (second-order) update of the loss + polarization drift."""
        lat = self.lattice
        phi, phi_p = field["phi"], field["phi_plus"]
        lz = -0.5 * self.kappa * lat.d_z
        gp = self.g_phi
        with np.errstate(all="ignore"):
            s1, s1p, _ = self._classical_sweep(phi, phi_p)
            pm = phi + 0.5 * (lz * phi - 1j * gp * s1)
            pmp = phi_p + 0.5 * (lz * phi_p + 1j * gp * s1p)
            s2, s2p, exc = self._classical_sweep(pm, pmp)
            phi += lz * pm - 1j * gp * s2
            phi_p += lz * pmp + 1j * gp * s2p
            finite = (np.isfinite(phi).all(axis=1)
                      & np.isfinite(phi_p).all(axis=1))
            mags = np.maximum(np.abs(phi).max(axis=1),
                              np.abs(phi_p).max(axis=1))
            alive &= finite & (mags < self.bound)
        if record_excitation:
            return exc
        return None

    def propagate_slice(self, field: dict, gen, alive: np.ndarray,
                        record_excitation: bool = False):
        """Advance the field by one z step through a fresh atomic slice.

        Sweeps tau integrating the atomic SDEs, accumulating the
        polarization source and the shared interaction noise, then updates
        the field with drift + reservoir noise.  Returns the slice-end
        atomic excitation sum per trajectory when requested.
        """
        if self.stiff_exact and not self.noise and self.conjugate_fix:
            return self._classical_slice(field, alive, record_excitation)
        lat = self.lattice
        phi, phi_p = field["phi"], field["phi_plus"]
        batch = phi.shape[0]
        nnu = lat.n_classes
        dts = self.scaling.atom_dt
        sq_dts = math.sqrt(dts)
        w_share = self.scaling.shared_weight
        gd = self.g_phi
        gc = lat.g_cell
        x = self.gauge_x
        deltas = lat.detunings[None, :]
        if self.stiff_exact:
            # linear detuning/loss terms applied as exact exponential
            # factors; only the interaction drift stays Euler
            rot = np.exp(-0.5j * deltas * dts)
            loss = math.exp(-0.5 * self.kappa * lat.d_z)
            deltas = np.zeros_like(deltas)
        root_n = np.sqrt(lat.atoms_per_cell)[None, :]

        b1 = np.broadcast_to(root_n + 0j, (batch, nnu)).copy()
        b1p = b1.copy()
        b2 = np.zeros((batch, nnu), dtype=complex)
        b2p = np.zeros((batch, nnu), dtype=complex)

        src = np.empty_like(phi)
        src_p = np.empty_like(phi)
        kick = np.zeros_like(phi) if self.noise else None
        kick_p = np.zeros_like(phi) if self.noise else None

        with np.errstate(all="ignore"):
            for i in range(lat.n_tau):
                u = phi[:, i:i + 1]
                up = phi_p[:, i:i + 1]
                acc = 0.0
                acc_p = 0.0
                fk = 0.0
                fk_p = 0.0
                for _ in range(self.nsub):
                    acc = acc + (b1p * b2).sum(axis=1)
                    acc_p = acc_p + (b2p * b1).sum(axis=1)
                    db1, db1p, db2, db2p = ppr_atomic_drift(
                        b1, b1p, b2, b2p, gd * u, gd * up, deltas, 1.0,
                        self.conjugate_fix)
                    if self.noise:
                        c = np.sqrt(-0.5j * gc * b2)
                        cp = np.sqrt(0.5j * gc * b2p)
                        q = _rng.normal_array(gen, (batch, nnu, 4))
                        e34 = q[..., 0] + 1j * q[..., 1]
                        e56 = q[..., 2] + 1j * q[..., 3]
                        fk = fk + (c * e34).sum(axis=1) * (w_share * x)
                        fk_p = fk_p + (cp * e56).sum(axis=1) * (w_share * x)
                        b1 = b1 + db1 * dts + c * e34.conj() * (sq_dts / x)
                        b1p = b1p + db1p * dts + cp * e56.conj() * (sq_dts / x)
                    else:
                        b1 = b1 + db1 * dts
                        b1p = b1p + db1p * dts
                    b2 = b2 + db2 * dts
                    b2p = b2p + db2p * dts
                    if self.stiff_exact:
                        b1 = b1 * rot
                        b1p = b1p * rot.conj()
                        b2 = b2 * rot.conj()
                        b2p = b2p * rot
                src[:, i] = acc / self.nsub
                src_p[:, i] = acc_p / self.nsub
                if self.noise:
                    kick[:, i] = fk
                    kick_p[:, i] = fk_p

            if self.stiff_exact:
                dphi = (loss - 1.0) * phi - 1j * self.g_phi * src
                dphi_p = (loss - 1.0) * phi_p + 1j * self.g_phi * src_p
            else:
                dphi = ((-0.5 * self.kappa * lat.d_z) * phi
                        - 1j * self.g_phi * src)
                dphi_p = ((-0.5 * self.kappa * lat.d_z) * phi_p
                          + 1j * self.g_phi * src_p)
            if self.noise:
                dphi += kick
                dphi_p += kick_p
                rs = self.scaling.reservoir_std
                if rs > 0.0:
                    q = _rng.normal_array(gen, (batch, lat.n_tau, 2), std=rs)
                    e12 = q[..., 0] + 1j * q[..., 1]
                    dphi += e12
                    dphi_p += e12.conj()
            phi += dphi
            phi_p += dphi_p

            finite = (np.isfinite(phi).all(axis=1)
                      & np.isfinite(phi_p).all(axis=1)
                      & np.isfinite(b1).all(axis=1)
                      & np.isfinite(b1p).all(axis=1))
            mags = np.maximum(np.abs(phi).max(axis=1),
                              np.abs(phi_p).max(axis=1))
            atom_mag = np.maximum(
                np.abs(b1).max(axis=1, initial=0.0),
                np.abs(b1p).max(axis=1, initial=0.0))
            alive &= finite & (mags < self.bound) & (atom_mag < self.bound)

        if record_excitation:
            return (b2p * b2).sum(axis=1)
        return None

    def flux_samples(self, field: dict) -> np.ndarray:
        """Per-trajectory photon number Re(sum d_tau phi+ phi)."""
        s = (field["phi_plus"] * field["phi"]).sum(axis=1) * self.lattice.d_tau
        return s.real

    def quad_pair(self, field: dict, f_lo: np.ndarray):
        """(a, b) with M_theta = a e^{i theta} + b e^{-i theta}."""
        d_tau = self.lattice.d_tau
        a = (field["phi"] * f_lo).sum(axis=1) * d_tau
        b = (field["phi_plus"] * f_lo.conj()).sum(axis=1) * d_tau
        return a, b
