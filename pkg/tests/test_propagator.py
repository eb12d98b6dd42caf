"""Ensemble orchestration: scheme handling, RNG batching, determinism
and small end-to-end physics checks."""

import math
import warnings

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from phasesim.model import (ConfigError, LineshapeSpec, PhysicalConfig,
                            PulseSpec)
from phasesim.propagator import (RunSpec, SingleCellSpec, StepScheme,
                                 auto_tau_substeps, recorded_z, run_batch,
                                 run_ensemble, run_single_cell_ensemble,
                                 run_trajectory, wiener_increments)

A = 1e12
G_PHI = math.sqrt(2.0 * A / 1e6)


def _spec(**kw):
    phys = PhysicalConfig(
        g_phi=G_PHI, kappa=kw.pop("kappa", 0.0), n_bar=kw.pop("n_bar", 0.0),
        rho_1d=kw.pop("rho_1d", 0.0),
        lineshape=LineshapeSpec(center_wavelength=7.94e-7,
                                lorentzian_hwhm=2e10),
        pulse=PulseSpec(inverse_width=A),
        z_max=kw.pop("z_max", 100.0), v_g=2e8)
    defaults = dict(phys=phys, n_tau=24, n_z=10, n_classes=1, method="ppr",
                    n_traj=600, master_seed=12345, batch_size=200,
                    n_theta=8, n_subbatches=4)
    defaults.update(kw)
    return RunSpec(**defaults)


def test_step_scheme_validation():
    StepScheme("drift_implicit_euler", 4, 2)
    with pytest.raises(ConfigError):
        StepScheme("heun")
    with pytest.raises(ConfigError):
        StepScheme(record_stride=0)
    with pytest.raises(ConfigError):
        StepScheme(tau_substeps=-1)


def test_auto_tau_substeps_rabi_rule():
    spec = _spec()
    lat = spec.lattice()
    # peak Rabi angle per tau bin is A * d_tau = 16 / n_tau
    assert auto_tau_substeps(spec.phys, lat) == math.ceil(
        (16.0 / 24) / 0.05)
    assert auto_tau_substeps(spec.phys, lat, max_angle=10.0) == 1


def test_wiener_increments():
    gen = np.random.default_rng(0)
    assert np.all(wiener_increments(gen, 5, 0.0) == 0.0)
    w = wiener_increments(gen, 100_000, 2.5)
    assert abs(w.var() / 2.5 - 1.0) < 0.05
    with pytest.raises(ConfigError):
        wiener_increments(gen, 5, -1.0)


def test_recorded_slices_and_positions():
    spec = _spec(scheme=StepScheme(record_stride=5))
    assert spec.n_slices() == 3
    assert np.allclose(recorded_z(spec), [0.0, 50.0, 100.0])


def test_unknown_method_rejected():
    with pytest.raises(ConfigError):
        _spec(method="mft").make_kernel()


def test_same_seed_reproduces_ensemble():
    spec = _spec(n_traj=400, kappa=1e-2, n_bar=0.5)
    a = run_ensemble(spec)
    b = run_ensemble(spec)
    assert np.array_equal(a.quad_re.mean, b.quad_re.mean)
    assert np.array_equal(a.flux.m2, b.flux.m2)
    c = run_ensemble(_spec(n_traj=400, kappa=1e-2, n_bar=0.5,
                           master_seed=999))
    assert not np.array_equal(a.flux.mean, c.flux.mean)


def test_worker_count_invariance():
    spec = _spec(n_traj=600, kappa=1e-2, method="twa")
    serial = run_ensemble(spec, workers=1)
    parallel = run_ensemble(spec, workers=3)
    assert serial.n_total == parallel.n_total == 600
    assert np.array_equal(serial.quad_re.mean, parallel.quad_re.mean)
    assert np.array_equal(serial.quad_im.m2, parallel.quad_im.m2)
    assert np.array_equal(serial.flux.mean, parallel.flux.mean)


def test_run_trajectory_reproduces_batch_lane():
    spec = _spec(n_traj=450, kappa=1e-2)
    _, collected, alive = run_batch(spec, 1, collect_samples=True)
    traj = run_trajectory(spec, 200 + 37)  # batch 1, lane 37
    assert np.array_equal(traj["quad"], collected["quad"][37])
    assert np.array_equal(traj["flux"], collected["flux"][37])
    assert traj["diverged"] == (not bool(alive[37]))
    with pytest.raises(ConfigError):
        run_trajectory(spec, 450)


def test_vacuum_medium_linear_loss_ppr():
    # no atoms: PPR flux decays deterministically as exp(-kappa z) and
    # the normal-ordered quadrature variance stays exactly zero
    kappa = 1e-2
    spec = _spec(kappa=kappa, n_traj=64, batch_size=64,
                 scheme=StepScheme("drift_implicit_euler", 1, 5))
    stats = run_ensemble(spec)
    z = recorded_z(spec)
    n_in = stats.flux.mean[0, 0]
    decay = stats.flux.mean[:, 0] / n_in
    assert np.abs(decay / np.exp(-kappa * z) - 1.0).max() < 1e-12
    assert np.abs(stats.normal_ordered_variance()).max() < 1e-10 * n_in
    assert stats.n_diverged == 0


def test_single_cell_classical_matches_ode_oracle():
    g, gamma, delta, alpha0 = 1.0, 0.3, 0.4, 2.0
    t_max = 0.5 * math.pi

    def rhs(_, y):
        a, b1, b2 = y[0] + 1j * y[1], y[2] + 1j * y[3], y[4] + 1j * y[5]
        da = -0.5 * gamma * a - 1j * g * np.conj(b1) * b2
        db1 = -0.5j * delta * b1 - 1j * g * np.conj(a) * b2
        db2 = 0.5j * delta * b2 - 1j * g * a * b1
        return [da.real, da.imag, db1.real, db1.imag, db2.real, db2.imag]

    sol = solve_ivp(rhs, (0.0, t_max), [alpha0, 0, 1, 0, 0, 0],
                    rtol=1e-10, atol=1e-12)
    n_exact = sol.y[0, -1] ** 2 + sol.y[1, -1] ** 2
    spec = SingleCellSpec(g=g, delta=delta, gamma=gamma, n_bar=0.0,
                          alpha0=alpha0, n_atoms=1.0, t_max=t_max,
                          n_steps=20000, method="twa", n_traj=4,
                          master_seed=0, batch_size=4, noise=False)
    stats = run_single_cell_ensemble(spec)
    assert abs(stats.flux.mean[-1, 0] / n_exact - 1.0) < 5e-3
    # PPR classical path agrees with the conjugate pair dynamics
    stats_p = run_single_cell_ensemble(spec.__class__(**{
        **spec.__dict__, "method": "ppr"}))
    assert abs(stats_p.flux.mean[-1, 0] / n_exact - 1.0) < 5e-3


def test_single_cell_determinism_and_divergence_count():
    spec = SingleCellSpec(g=1.0, delta=0.0, gamma=0.2, n_bar=1.0,
                          alpha0=3.0, n_atoms=1.0, t_max=1.0, n_steps=200,
                          method="ppr", n_traj=3000, master_seed=7,
                          batch_size=1000)
    a = run_single_cell_ensemble(spec)
    b = run_single_cell_ensemble(spec)
    assert np.array_equal(a.quad_re.mean, b.quad_re.mean)
    assert a.n_total == 3000
    assert a.divergence_fraction() < 1e-3
