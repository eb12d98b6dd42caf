"""Trajectory orchestration: z-stepping with per-slice tau sweeps, the
Ito integrator, deterministic batch RNG streams and ensemble statistics.

RNG contract
------------
Trajectories are grouped into fixed-size batches; batch b of method m
draws from the Philox stream keyed (derive_seed(master_seed, m), b).
Within a stream the draw order is fixed: for each z step, the tau sweep
increments in (tau index, substep, class, channel) order, then the
reservoir block.  Batch boundaries depend only on (n_traj, batch_size),
so results are bitwise reproducible for any worker count, and a single
trajectory can be re-run by regenerating its batch and selecting its lane.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from multiprocessing import get_context

import numpy as np

from . import rng as _rng
from .model import (ConfigError, LatticeConfig, PhysicalConfig, build_lattice,
                    sech_pulse)
from .observables import default_theta_grid, matched_lo, quadrature_from_pair
from .ppr import PprKernel, ppr_atomic_drift
from .stats import EnsembleStats
from .twa import TwaKernel, twa_atomic_drift

_METHOD_ID = {"ppr": 0, "twa": 1}


@dataclass(frozen=True)
class StepScheme:
    """Integration scheme: explicit Euler-Maruyama by default; the
    drift-implicit variant treats the stiff loss/detuning terms with exact
    exponential factors.  tau_substeps=0 selects the Rabi-angle rule
    (g_phi |phi|_max d_tau / n_sub <= 0.05 rad)."""

    variant: str = "euler_maruyama"
    tau_substeps: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if self.variant not in ("euler_maruyama", "drift_implicit_euler"):
            raise ConfigError(f"unknown scheme variant {self.variant!r}")
        if self.tau_substeps < 0 or self.record_stride < 1:
            raise ConfigError("scheme counts must be positive")


def auto_tau_substeps(phys: PhysicalConfig, lattice: LatticeConfig,
                      max_angle: float = 0.05) -> int:
    """Substeps so one substep advances the Rabi phase by <= max_angle."""
    peak = phys.pulse.area_factor * phys.pulse.inverse_width / phys.g_phi \
        if phys.g_phi > 0 else 0.0
    angle = phys.g_phi * peak * lattice.d_tau
    return max(1, int(math.ceil(angle / max_angle)))


def wiener_increments(gen, count: int, variance: float) -> np.ndarray:
    """Independent real Gaussian increments of the given variance."""
    if variance < 0:
        raise ConfigError("variance must be >= 0")
    if variance == 0.0:
        return np.zeros(count)
    return _rng.normal_array(gen, (count,), std=math.sqrt(variance))


@dataclass(frozen=True)
class RunSpec:
    """Everything one worker needs to integrate a batch of trajectories."""

    phys: PhysicalConfig
    n_tau: int
    n_z: int
    n_classes: int
    method: str
    n_traj: int
    master_seed: int
    scheme: StepScheme = StepScheme()
    batch_size: int = 1024
    n_theta: int = 64
    noise: bool = True
    gauge_x: float = 1.0
    cutoff_fwhm: float = 4.0
    n_subbatches: int = 32

    def lattice(self) -> LatticeConfig:
        return build_lattice(self.phys, self.n_tau, self.n_z, self.n_classes,
                             self.cutoff_fwhm)

    def n_slices(self) -> int:
        return 1 + self.n_z // self.scheme.record_stride

    def make_kernel(self, lattice=None):
        lattice = lattice if lattice is not None else self.lattice()
        nsub = self.scheme.tau_substeps or auto_tau_substeps(self.phys,
                                                             lattice)
        stiff = self.scheme.variant == "drift_implicit_euler"
        if self.method == "ppr":
            return PprKernel(lattice, self.phys.g_phi, self.phys.kappa,
                             self.phys.n_bar, tau_substeps=nsub,
                             noise=self.noise, gauge_x=self.gauge_x,
                             stiff_exact=stiff)
        if self.method == "twa":
            return TwaKernel(lattice, self.phys.g_phi, self.phys.kappa,
                             self.phys.n_bar, tau_substeps=nsub,
                             noise=self.noise, stiff_exact=stiff)
        raise ConfigError(f"unknown method {self.method!r}")


def _batch_stream(spec: RunSpec, batch_index: int):
    method_seed = _rng.derive_seed(spec.master_seed, _METHOD_ID[spec.method])
    return _rng.stream(method_seed, batch_index)


def propagate_slice(field: dict, kernel, gen, alive: np.ndarray,
                    record_excitation: bool = False):
    """Advance the field one z step through a fresh atomic slice (see the
    method kernels for the sweep semantics)."""
    return kernel.propagate_slice(field, gen, alive,
                                  record_excitation=record_excitation)


def run_batch(spec: RunSpec, batch_index: int,
              collect_samples: bool = False):
    """Integrate one batch of trajectories, streaming into EnsembleStats.

    With collect_samples=True the per-trajectory quadrature and flux
    samples are also returned (small batches only; used by
    run_trajectory and the diagnostics)."""
    t0 = time.perf_counter()
    lattice = spec.lattice()
    kernel = spec.make_kernel(lattice)
    thetas = default_theta_grid(spec.n_theta)
    lo = batch_index * spec.batch_size
    batch = min(spec.batch_size, spec.n_traj - lo)
    if batch <= 0:
        raise ConfigError("empty batch")
    gen = _batch_stream(spec, batch_index)

    phi0 = sech_pulse(spec.phys.pulse, spec.phys.g_phi, lattice.tau_grid)
    kernel.set_bound_from_field(phi0)
    f_lo = matched_lo(phi0, lattice.d_tau)
    field = kernel.initial_field(phi0, batch, gen)
    alive = np.ones(batch, dtype=bool)

    n_slices = spec.n_slices()
    stats = EnsembleStats(n_slices, spec.n_theta,
                          n_subbatches=spec.n_subbatches)
    stats.n_total = batch
    collected = {"quad": np.zeros((batch, n_slices, spec.n_theta),
                                  dtype=complex),
                 "flux": np.zeros((batch, n_slices))} if collect_samples \
        else None

    def record(row: int):
        a, b = kernel.quad_pair(field, f_lo)
        m = quadrature_from_pair(a, b, thetas)
        flux = kernel.flux_samples(field)
        stats.add_slice(row, m[alive], flux[alive],
                        subbatch=batch_index % spec.n_subbatches)
        if collected is not None:
            collected["quad"][:, row] = m
            collected["flux"][:, row] = flux

    record(0)
    row = 1
    for step in range(1, spec.n_z + 1):
        propagate_slice(field, kernel, gen, alive)
        if step % spec.scheme.record_stride == 0:
            record(row)
            row += 1
    stats.n_diverged = int(batch - alive.sum())
    stats.wall_seconds = time.perf_counter() - t0
    if collect_samples:
        return stats, collected, alive
    return stats


def run_trajectory(spec: RunSpec, trajectory_index: int):
    """Deterministic single-trajectory record: per-slice complex quadrature
    samples, flux and divergence status.

    Reproduces exactly the lane the trajectory occupies in its ensemble
    batch (the batch is regenerated and the lane selected)."""
    if not 0 <= trajectory_index < spec.n_traj:
        raise ConfigError("trajectory index out of range")
    b = trajectory_index // spec.batch_size
    lane = trajectory_index % spec.batch_size
    _, collected, alive = run_batch(spec, b, collect_samples=True)
    return {"quad": collected["quad"][lane], "flux": collected["flux"][lane],
            "diverged": not bool(alive[lane]),
            "thetas": default_theta_grid(spec.n_theta)}


def _batch_worker(args):
    spec, batch_index = args
    return batch_index, run_batch(spec, batch_index)


def run_ensemble(spec: RunSpec, workers: int = 1) -> EnsembleStats:
    """All batches, merged in fixed batch order (worker-count invariant)."""
    if spec.n_traj < 2:
        raise ConfigError("run_ensemble needs n_traj >= 2")
    t0 = time.perf_counter()
    n_batches = (spec.n_traj + spec.batch_size - 1) // spec.batch_size
    jobs = [(spec, b) for b in range(n_batches)]
    if workers <= 1 or n_batches == 1:
        parts = [_batch_worker(j) for j in jobs]
    else:
        ctx = get_context("spawn")
        with ctx.Pool(min(workers, n_batches)) as pool:
            parts = list(pool.imap_unordered(_batch_worker, jobs))
    parts.sort(key=lambda kv: kv[0])
    total = EnsembleStats(spec.n_slices(), spec.n_theta,
                          n_subbatches=spec.n_subbatches)
    for _, part in parts:
        total.merge(part)
    total.wall_seconds = time.perf_counter() - t0
    return total


def recorded_z(spec: RunSpec) -> np.ndarray:
    """z positions of the recorded slices."""
    stride = spec.scheme.record_stride
    d_z = spec.phys.z_max / spec.n_z
    return d_z * stride * np.arange(spec.n_slices())


# -- single-cell mode (one field mode + one atomic cell, time evolution) ----

@dataclass(frozen=True)
class SingleCellSpec:
    """Per-cell time evolution matching the exact-oracle geometry: one
    z step of the lattice is identified with one time step."""

    g: float
    delta: float
    gamma: float
    n_bar: float
    alpha0: complex
    n_atoms: float
    t_max: float
    n_steps: int
    method: str
    n_traj: int
    master_seed: int
    batch_size: int = 20000
    n_theta: int = 8
    record_stride: int = 0   # 0 -> record only t=0 and t_max
    noise: bool = True

    def record_steps(self):
        stride = self.record_stride or self.n_steps
        return [s for s in range(self.n_steps + 1)
                if s % stride == 0 or s == self.n_steps]


def _single_cell_batch(spec: SingleCellSpec, batch_index: int):
    gen = _rng.stream(_rng.derive_seed(spec.master_seed,
                                       2 + _METHOD_ID[spec.method]),
                      batch_index)
    lo = batch_index * spec.batch_size
    batch = min(spec.batch_size, spec.n_traj - lo)
    dt = spec.t_max / spec.n_steps
    sq_dt = math.sqrt(dt)
    thetas = default_theta_grid(spec.n_theta)
    rows = spec.record_steps()
    stats = EnsembleStats(len(rows), spec.n_theta)
    stats.n_total = batch
    root_n = math.sqrt(spec.n_atoms)
    bound = 1e6 * max(1.0, abs(spec.alpha0), root_n)

    if spec.method == "ppr":
        a = np.full(batch, spec.alpha0, dtype=complex)
        ap = a.conj().copy()
        b1 = np.full(batch, root_n, dtype=complex)
        b1p = b1.copy()
        b2 = np.zeros(batch, dtype=complex)
        b2p = np.zeros(batch, dtype=complex)
    elif spec.noise:
        q = _rng.normal_array(gen, (batch, 6), std=0.5)
        a = spec.alpha0 + q[:, 0] + 1j * q[:, 1]
        b1 = root_n + q[:, 2] + 1j * q[:, 3]
        b2 = (q[:, 4] + 1j * q[:, 5]).astype(complex)
    else:
        a = np.full(batch, spec.alpha0, dtype=complex)
        b1 = np.full(batch, root_n, dtype=complex)
        b2 = np.zeros(batch, dtype=complex)
    alive = np.ones(batch, dtype=bool)
    res_std = math.sqrt(0.5 * spec.gamma
                        * (spec.n_bar + (0.5 if spec.method == "twa" else 0.0)))

    def record(row):
        if spec.method == "ppr":
            n_est = (ap * a).real
            m = quadrature_from_pair(a, ap, thetas)
        else:
            n_est = np.abs(a) ** 2 - (0.5 if spec.noise else 0.0)
            m = quadrature_from_pair(a, a.conj(), thetas)
        stats.add_slice(row, m[alive], n_est[alive], subbatch=batch_index)

    row = 0
    record(row)
    with np.errstate(all="ignore"):
        for step in range(1, spec.n_steps + 1):
            if spec.method == "ppr":
                da = -0.5 * spec.gamma * a - 1j * spec.g * b1p * b2
                dap = -0.5 * spec.gamma * ap + 1j * spec.g * b2p * b1
                db1, db1p, db2, db2p = ppr_atomic_drift(
                    b1, b1p, b2, b2p, a, ap, spec.delta, spec.g)
                if spec.noise:
                    c = np.sqrt(-0.5j * spec.g * b2)
                    cp = np.sqrt(0.5j * spec.g * b2p)
                    q = _rng.normal_array(gen, (batch, 6), std=sq_dt)
                    e12 = q[:, 0] + 1j * q[:, 1]
                    e34 = q[:, 2] + 1j * q[:, 3]
                    e56 = q[:, 4] + 1j * q[:, 5]
                    a = a + da * dt + res_std * e12 + c * e34
                    ap = ap + dap * dt + res_std * e12.conj() + cp * e56
                    b1 = b1 + db1 * dt + c * e34.conj()
                    b1p = b1p + db1p * dt + cp * e56.conj()
                else:
                    a = a + da * dt
                    ap = ap + dap * dt
                    b1 = b1 + db1 * dt
                    b1p = b1p + db1p * dt
                b2 = b2 + db2 * dt
                b2p = b2p + db2p * dt
                finite = (np.isfinite(a) & np.isfinite(ap) & np.isfinite(b1)
                          & np.isfinite(b1p) & np.isfinite(b2)
                          & np.isfinite(b2p))
                mag = np.maximum(np.abs(a), np.abs(ap))
            else:
                da = -0.5 * spec.gamma * a - 1j * spec.g * np.conj(b1) * b2
                db1, db2 = twa_atomic_drift(b1, b2, a, spec.delta, spec.g)
                if spec.noise and res_std > 0:
                    q = _rng.normal_array(gen, (batch, 2), std=sq_dt)
                    a = a + da * dt + res_std * (q[:, 0] + 1j * q[:, 1])
                else:
                    a = a + da * dt
                b1 = b1 + db1 * dt
                b2 = b2 + db2 * dt
                finite = np.isfinite(a) & np.isfinite(b1) & np.isfinite(b2)
                mag = np.abs(a)
            alive &= finite & (mag < bound)
            if step in rows:
                row += 1
                record(row)
    stats.n_diverged = int(batch - alive.sum())
    return stats


def run_single_cell_ensemble(spec: SingleCellSpec,
                             workers: int = 1) -> EnsembleStats:
    """Trajectory ensemble for the single-cell geometry (oracle benchmark)."""
    n_batches = (spec.n_traj + spec.batch_size - 1) // spec.batch_size
    parts = [_single_cell_batch(spec, b) for b in range(n_batches)]
    rows = spec.record_steps()
    total = EnsembleStats(len(rows), spec.n_theta)
    for part in parts:
        total.merge(part)
    return total
