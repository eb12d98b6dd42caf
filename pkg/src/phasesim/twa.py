"""Truncated-Wigner drift and reservoir noise kernels.

Variables are strict conjugate pairs (stored once).  Quantum fluctuations
enter only through the Wigner sampling of the initial state plus the
symmetric-ordered reservoir noise; the atomic variables receive no
stochastic forcing during propagation.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng as _rng
from .model import LatticeConfig, initial_atoms
from .ppr import interaction_noise_scaling


def twa_atomic_drift(b1, b2, u, delta, g):
    """Drift of one cell's amplitudes; u is the flux-converted local field
    (g*u in rad/s)."""
    db1 = -0.5j * delta * b1 - 1j * g * np.conj(u) * b2
    db2 = 0.5j * delta * b2 - 1j * g * u * b1
    return db1, db2


def twa_field_drift(phi, r_minus, kappa, g_phi, rho_1d, weights):
    """d(phi)/dz with R- = (1/N) beta1* beta2 per class."""
    src = np.tensordot(r_minus, np.asarray(weights), axes=([-1], [0]))
    return -0.5 * kappa * phi - 1j * g_phi * rho_1d * src


def twa_reservoir_noise(kappa, n_bar, lattice: LatticeConfig, gen,
                        shape: tuple[int, ...]) -> np.ndarray:
    """Complex field increments per (tau sample, z step) with variance
    kappa*(n_bar + 1/2)*d_z/d_tau; the half quantum is the symmetric-
    ordering vacuum contribution absent from the PPR reservoir."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    var = kappa * (n_bar + 0.5) * lattice.d_z / lattice.d_tau
    if var == 0.0:
        return np.zeros(shape, dtype=complex)
    q = _rng.normal_array(gen, shape + (2,), std=math.sqrt(0.5 * var))
    return q[..., 0] + 1j * q[..., 1]


class TwaKernel:
    """One-trajectory-batch truncated-Wigner propagation kernels."""

    method = "twa"
    ordering_s = 0.5

    def __init__(self, lattice: LatticeConfig, g_phi: float, kappa: float,
                 n_bar: float, tau_substeps: int = 1, noise: bool = True,
                 divergence_bound: float = 1e6, stiff_exact: bool = False):
        self.lattice = lattice
        self.g_phi = g_phi
        self.kappa = kappa
        self.n_bar = n_bar
        self.nsub = max(1, tau_substeps)
        self.noise = noise
        self.stiff_exact = stiff_exact
        self.scaling = interaction_noise_scaling(
            lattice, kappa, n_bar, self.ordering_s, self.nsub)
        self._div_bound = divergence_bound
        self.bound = divergence_bound

    def initial_field(self, phi0: np.ndarray, batch: int, gen):
        """Coherent input plus Wigner vacuum noise of variance 1/(2 d_tau)
        per tau sample (the discretized delta correlator)."""
        phi = np.broadcast_to(phi0, (batch, phi0.size)).astype(complex).copy()
        if self.noise:
            std = math.sqrt(0.25 / self.lattice.d_tau)
            q = _rng.normal_array(gen, (batch, phi0.size, 2), std=std)
            phi += q[..., 0] + 1j * q[..., 1]
        return {"phi": phi}

    def set_bound_from_field(self, phi0: np.ndarray) -> None:
        scale = max(1.0, float(np.abs(phi0).max()),
                    math.sqrt(max(np.max(self.lattice.atoms_per_cell,
                                         initial=0.0), 1.0)))
        self.bound = self._div_bound * scale

    def _slice_atoms(self, batch: int, gen):
        """Initial atomic amplitudes of a fresh slice: Wigner-sampled when
        noise is on, the deterministic ground state otherwise."""
        lat = self.lattice
        if self.noise:
            atoms = initial_atoms(lat, "twa", rng=gen, batch=batch)
            return atoms["b1"], atoms["b2"]
        root_n = np.sqrt(lat.atoms_per_cell)[None, :]
        b1 = np.broadcast_to(root_n + 0j, (batch, lat.n_classes)).copy()
        b2 = np.zeros((batch, lat.n_classes), dtype=complex)
        return b1, b2

    def _rotation_sweep(self, phi, b1, b2):
        """Tau sweep of one atomic slice with the interaction integrated
        as an exact rotation per substep (the in-slice dynamics is an ODE:
        all stochasticity sits in the initial amplitudes); returns the
        trapezoid-averaged polarization source and slice-end excitation.
        The passed initial amplitudes are not modified."""
        lat = self.lattice
        dts = self.scaling.atom_dt
        gd = self.g_phi
        rot = np.exp(-0.5j * lat.detunings[None, :] * dts)
        b1 = b1.copy()
        b2 = b2.copy()
        src = np.empty_like(phi)
        for i in range(lat.n_tau):
            u = gd * phi[:, i:i + 1]
            r = np.abs(u)
            cs = np.cos(r * dts)
            sn = -1j * np.sinc(r * dts / math.pi) * dts
            acc = 0.5 * (np.conj(b1) * b2).sum(axis=1)
            for k in range(self.nsub):
                b1, b2 = (cs * b1 + sn * np.conj(u) * b2,
                          cs * b2 + sn * u * b1)
                b1 = b1 * rot
                b2 = b2 * rot.conj()
                w = 0.5 if k == self.nsub - 1 else 1.0
                acc = acc + w * (np.conj(b1) * b2).sum(axis=1)
            src[:, i] = acc / self.nsub
        return src, (np.abs(b2) ** 2).sum(axis=1)

    def _rotation_slice(self, field: dict, gen, alive: np.ndarray,
                        record_excitation: bool):
        """One z step with a midpoint (second-order) update of the loss +
        polarization drift, both sweeps driven by the same slice atoms;
        additive reservoir noise enters after the drift."""
        lat = self.lattice
        phi = field["phi"]
        lz = -0.5 * self.kappa * lat.d_z
        gp = self.g_phi
        b1, b2 = self._slice_atoms(phi.shape[0], gen)
        with np.errstate(all="ignore"):
            s1, _ = self._rotation_sweep(phi, b1, b2)
            pm = phi + 0.5 * (lz * phi - 1j * gp * s1)
            s2, exc = self._rotation_sweep(pm, b1, b2)
            dphi = lz * pm - 1j * gp * s2
            if self.noise:
                dphi += twa_reservoir_noise(self.kappa, self.n_bar, lat, gen,
                                            phi.shape)
            phi += dphi
            finite = np.isfinite(phi).all(axis=1)
            alive &= finite & (np.abs(phi).max(axis=1) < self.bound)
        if record_excitation:
            return exc
        return None

    def propagate_slice(self, field: dict, gen, alive: np.ndarray,
                        record_excitation: bool = False):
        """Advance the field one z step through a fresh Wigner-sampled
        atomic slice (drift-only atoms, reservoir noise on the field)."""
        if self.stiff_exact:
            return self._rotation_slice(field, gen, alive,
                                        record_excitation)
        lat = self.lattice
        phi = field["phi"]
        batch = phi.shape[0]
        dts = self.scaling.atom_dt
        gd = self.g_phi
        deltas = lat.detunings[None, :]
        b1, b2 = self._slice_atoms(batch, gen)

        src = np.empty_like(phi)
        with np.errstate(all="ignore"):
            for i in range(lat.n_tau):
                u = gd * phi[:, i:i + 1]
                acc = 0.0
                for _ in range(self.nsub):
                    acc = acc + (np.conj(b1) * b2).sum(axis=1)
                    db1, db2 = twa_atomic_drift(b1, b2, u, deltas, 1.0)
                    b1 = b1 + db1 * dts
                    b2 = b2 + db2 * dts
                src[:, i] = acc / self.nsub

            dphi = ((-0.5 * self.kappa * lat.d_z) * phi
                    - 1j * self.g_phi * src)
            if self.noise:
                dphi += twa_reservoir_noise(self.kappa, self.n_bar, lat, gen,
                                            (batch, lat.n_tau))
            phi += dphi

            finite = np.isfinite(phi).all(axis=1)
            mags = np.abs(phi).max(axis=1)
            alive &= finite & (mags < self.bound)

        if record_excitation:
            return (np.abs(b2) ** 2).sum(axis=1)
        return None

    def flux_samples(self, field: dict) -> np.ndarray:
        """Photon number sum d_tau |phi|^2 minus the half-quantum-per-mode
        symmetric-ordering offset n_tau/2."""
        raw = (np.abs(field["phi"]) ** 2).sum(axis=1) * self.lattice.d_tau
        if self.noise:
            raw = raw - 0.5 * self.lattice.n_tau
        return raw

    def quad_pair(self, field: dict, f_lo: np.ndarray):
        d_tau = self.lattice.d_tau
        a = (field["phi"] * f_lo).sum(axis=1) * d_tau
        b = (field["phi"].conj() * f_lo.conj()).sum(axis=1) * d_tau
        return a, b
