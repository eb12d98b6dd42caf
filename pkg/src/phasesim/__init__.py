"""Monte Carlo phase-space simulation of near-resonant pulse propagation
through a 1-D two-level atomic medium, with an exact single-mode benchmark.
"""

from .config import RunConfig, emit_config, emit_yaml, parse_config
from .fock_oracle import OracleConfig, evolve_master, oracle_expectations
from .model import (ConfigError, LatticeConfig, LineshapeSpec,
                    PhysicalConfig, PulseSpec, build_lattice,
                    discretize_lineshape, pulse_photon_number, sech_pulse,
                    voigt_profile)
from .observables import (default_theta_grid, matched_lo, mean_flux,
                          optimal_angle, quadrature, sampling_error,
                          squeezing_ratio)
from .propagator import (RunSpec, SingleCellSpec, StepScheme, recorded_z,
                         run_batch, run_ensemble, run_single_cell_ensemble,
                         run_trajectory)
from .stats import EnsembleStats, MomentGrid

__all__ = [
    "ConfigError", "EnsembleStats", "LatticeConfig", "LineshapeSpec",
    "MomentGrid", "OracleConfig", "PhysicalConfig", "PulseSpec",
    "RunConfig", "RunSpec", "SingleCellSpec", "StepScheme",
    "build_lattice", "default_theta_grid", "discretize_lineshape",
    "emit_config", "emit_yaml", "evolve_master", "matched_lo", "mean_flux",
    "optimal_angle", "oracle_expectations", "parse_config",
    "pulse_photon_number", "quadrature", "recorded_z", "run_batch",
    "run_ensemble", "run_single_cell_ensemble", "run_trajectory",
    "sampling_error", "sech_pulse", "squeezing_ratio", "voigt_profile",
]

__version__ = "0.1.0"
