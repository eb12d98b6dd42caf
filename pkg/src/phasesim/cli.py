"""Command-line front end: single runs, parameter sweeps, the exact
single-mode solver and the stochastic-vs-exact comparison harness.

Output files are plain CSV with fixed 17-significant-digit formatting so
reruns with the same seed and config produce identical bytes regardless
of worker count; the JSON manifest is written atomically and echoes the
full config for exact reproduction.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import metadata

import numpy as np
import yaml

from . import fock_oracle, rng as _rng
from .config import RunConfig, emit_config, parse_config
from .model import ConfigError, pulse_photon_number
from .observables import (default_theta_grid, mean_flux, optimal_angle,
                          squeezing_ratio)
from .propagator import (SingleCellSpec, recorded_z, run_ensemble,
                         run_single_cell_ensemble)

MAX_DIVERGENCE_FRACTION = 1e-3


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(s if isinstance(s, str) else _fmt(s)
                              for s in row) + "\n")


def _write_manifest(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _version() -> str:
    try:
        return metadata.version("phasesim")
    except metadata.PackageNotFoundError:
        return "unversioned"


def _load_config(path: str, args) -> RunConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    run = doc.setdefault("run", {})
    if args.method:
        run["method"] = args.method
    if args.trajectories:
        run["trajectories"] = args.trajectories
    if args.seed is not None:
        run["seed"] = args.seed
    if args.workers:
        run["workers"] = args.workers
    return parse_config(doc)


def run_once(cfg: RunConfig, out_dir: str) -> int:
    """Propagate all configured methods and write the columnar outputs.

    Returns the exit status (1 when the diverged fraction exceeds the
    quality gate for any method)."""
    os.makedirs(out_dir, exist_ok=True)
    thetas = default_theta_grid(cfg.n_theta)
    squeeze_rows, quad_rows, flux_rows = [], [], []
    manifest_methods = {}
    status = 0
    for method in cfg.methods():
        spec = cfg.run_spec(method)
        stats = run_ensemble(spec, workers=cfg.workers)
        z = recorded_z(spec)
        s, se = squeezing_ratio(stats, method)
        fmean, ferr = mean_flux(stats)
        for i, zi in enumerate(z):
            th_star, s_min = optimal_angle(s[i], thetas)
            k = int(np.argmin(s[i]))
            squeeze_rows.append((zi, th_star, s_min, se[i, k], method))
            for j, th in enumerate(thetas):
                quad_rows.append((zi, th, s[i, j], se[i, j], method))
            flux_rows.append((zi, fmean[i], ferr[i], method))
        frac = stats.divergence_fraction()
        manifest_methods[method] = {
            "trajectories": stats.n_total,
            "diverged": stats.n_diverged,
            "divergence_fraction": frac,
            "wall_seconds": stats.wall_seconds,
        }
        if frac > MAX_DIVERGENCE_FRACTION:
            print(f"{method}: diverged fraction {frac:.2e} exceeds "
                  f"{MAX_DIVERGENCE_FRACTION:.0e}", file=sys.stderr)
            status = 1
    _write_csv(os.path.join(out_dir, "squeezing.csv"),
               ["z", "theta_star", "S_min", "S_err", "method"], squeeze_rows)
    _write_csv(os.path.join(out_dir, "quadratures.csv"),
               ["z", "theta", "S", "S_err", "method"], quad_rows)
    _write_csv(os.path.join(out_dir, "flux.csv"),
               ["z", "flux", "flux_err", "method"], flux_rows)
    lattice = cfg.run_spec(cfg.methods()[0]).lattice()
    _write_manifest(os.path.join(out_dir, "manifest.json"), {
        "config": emit_config(cfg),
        "version": _version(),
        "methods": manifest_methods,
        "derived": {
            "g_cell": lattice.g_cell,
            "atoms_per_cell_min": float(lattice.atoms_per_cell.min()),
            "atoms_per_cell_max": float(lattice.atoms_per_cell.max()),
            "photon_number": pulse_photon_number(cfg.phys.pulse,
                                                 cfg.phys.g_phi),
        },
    })
    return status


SWEEP_AXES = {
    "density": ("physical", "rho_1d_per_m"),
    "kappa": ("physical", "kappa_per_m"),
    "n_bar": ("physical", "n_bar"),
}


def run_sweep(base_doc: dict, axis: str, values: list[float],
              out_dir: str) -> int:
    """Independent child runs along one parameter axis, each with a seed
    derived from (master seed, value index)."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from "
                          f"{sorted(SWEEP_AXES)}")
    if not values:
        raise ConfigError("sweep needs a non-empty value list")
    os.makedirs(out_dir, exist_ok=True)
    section, key = SWEEP_AXES[axis]
    master_seed = int(base_doc.get("run", {}).get("seed", 0))
    worst = 0
    index_rows = []
    for i, value in enumerate(values):
        doc = json.loads(json.dumps(base_doc))   # deep copy
        sec = doc.setdefault(section, {})
        sec[key] = value
        if axis == "density":
            # an explicit 1-D density overrides any volumetric preset pair
            sec.pop("rho_per_m3", None)
            sec.pop("a_eff_m2", None)
        doc.setdefault("run", {})["seed"] = _rng.derive_seed(master_seed, i)
        child = os.path.join(out_dir, f"{axis}_{i:03d}")
        try:
            status = run_once(parse_config(doc), child)
        except (ConfigError, fock_oracle.OracleError) as exc:
            print(f"sweep child {i} ({axis}={value}): {exc}",
                  file=sys.stderr)
            status = 1
        worst = max(worst, status)
        index_rows.append((_fmt(value), os.path.basename(child), status))
    _write_csv(os.path.join(out_dir, "index.csv"),
               [axis, "directory", "status"],
               [(v, d, "%d" % s) for v, d, s in index_rows])
    return worst


def _single_cell_args(sub):
    sub.add_argument("--g", type=float, default=1.0)
    sub.add_argument("--delta", type=float, default=0.0)
    sub.add_argument("--gamma", type=float, default=0.0)
    sub.add_argument("--nbar", type=float, default=0.0)
    sub.add_argument("--alpha0", type=float, default=10.0)
    sub.add_argument("--atoms", type=int, default=1)
    sub.add_argument("--t-max", type=float, required=True)
    sub.add_argument("--out", default=".")


def run_oracle(args) -> int:
    cfg = fock_oracle.OracleConfig(
        g=args.g, delta=args.delta, gamma=args.gamma, n_bar=args.nbar,
        alpha0=args.alpha0, t_max=args.t_max, n_atoms=args.atoms)
    thetas = default_theta_grid(8)
    times, states = fock_oracle.evolve_master(cfg, n_records=args.records)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for t, rho in zip(times, states):
        ex = fock_oracle.oracle_expectations(cfg, rho, thetas)
        for th, vn, vs in zip(thetas, ex["var_normal"],
                              ex["var_symmetric"]):
            rows.append((t, th, ex["n"], vn, vs, ex["p_excited"]))
    _write_csv(os.path.join(args.out, "oracle.csv"),
               ["t", "theta", "n", "var_normal", "var_symmetric",
                "p_excited"], rows)
    return 0


def run_compare(args) -> int:
    """Stochastic single-cell ensembles against the exact solution."""
    oc = fock_oracle.OracleConfig(
        g=args.g, delta=args.delta, gamma=args.gamma, n_bar=args.nbar,
        alpha0=args.alpha0, t_max=args.t_max, n_atoms=args.atoms)
    thetas = default_theta_grid(8)
    _, states = fock_oracle.evolve_master(oc, n_records=1)
    expected = fock_oracle.oracle_expectations(oc, states[-1], thetas)
    methods = ("ppr", "twa") if args.method == "both" else (args.method,)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    status = 0
    for method in methods:
        spec = SingleCellSpec(
            g=args.g, delta=args.delta, gamma=args.gamma, n_bar=args.nbar,
            alpha0=args.alpha0, n_atoms=float(args.atoms), t_max=args.t_max,
            n_steps=args.steps, method=method, n_traj=args.trajectories,
            master_seed=args.seed, n_theta=8)
        stats = run_single_cell_ensemble(spec, workers=args.workers)
        gate_var = method == "ppr"
        try:
            lines = fock_oracle.compare_ensembles(expected, stats, method,
                                                  thetas, sigma=args.sigma,
                                                  gate_variance=gate_var)
        except fock_oracle.OracleError as exc:
            print(f"{method}: {exc}", file=sys.stderr)
            status = 1
            lines = fock_oracle.compare_ensembles(expected, stats, method,
                                                  thetas, sigma=np.inf)
        for name, sim, exact, se, z in lines:
            rows.append((name, sim, exact, se, z, method))
    _write_csv(os.path.join(args.out, "compare.csv"),
               ["observable", "simulated", "exact", "se", "z", "method"],
               rows)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="phasesim",
        description="Stochastic phase-space simulation of pulse "
                    "propagation through a two-level medium")
    subs = p.add_subparsers(dest="command", required=True)

    run_p = subs.add_parser("run", help="propagate one configuration")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--method", choices=("ppr", "twa", "both"))
    run_p.add_argument("--trajectories", type=int)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--workers", type=int)
    run_p.add_argument("--out", default=".")

    sweep_p = subs.add_parser("sweep", help="one-axis parameter sweep")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", required=True,
                         choices=sorted(SWEEP_AXES))
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated numbers")
    sweep_p.add_argument("--method", choices=("ppr", "twa", "both"))
    sweep_p.add_argument("--trajectories", type=int)
    sweep_p.add_argument("--seed", type=int)
    sweep_p.add_argument("--workers", type=int)
    sweep_p.add_argument("--out", default=".")

    orc_p = subs.add_parser("oracle", help="exact single-mode solution")
    _single_cell_args(orc_p)
    orc_p.add_argument("--records", type=int, default=10)

    cmp_p = subs.add_parser("compare",
                            help="stochastic vs exact, single cell")
    _single_cell_args(cmp_p)
    cmp_p.add_argument("--method", choices=("ppr", "twa", "both"),
                       default="both")
    cmp_p.add_argument("--trajectories", type=int, default=100000)
    cmp_p.add_argument("--steps", type=int, default=2000)
    cmp_p.add_argument("--seed", type=int, default=0)
    cmp_p.add_argument("--workers", type=int, default=1)
    cmp_p.add_argument("--sigma", type=float, default=5.0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load_config(args.config, args)
            return run_once(cfg, args.out)
        if args.command == "sweep":
            with open(args.config) as fh:
                doc = yaml.safe_load(fh)
            run = doc.setdefault("run", {})
            if args.method:
                run["method"] = args.method
            if args.trajectories:
                run["trajectories"] = args.trajectories
            if args.seed is not None:
                run["seed"] = args.seed
            if args.workers:
                run["workers"] = args.workers
            values = [float(v) for v in args.values.split(",") if v.strip()]
            return run_sweep(doc, args.axis, values, args.out)
        if args.command == "oracle":
            return run_oracle(args)
        if args.command == "compare":
            return run_compare(args)
    except (ConfigError, fock_oracle.OracleError) as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
