"""Run-configuration documents: YAML schema with explicit unit suffixes,
all-errors validation, presets and round-trip emission.

Every physical key carries its unit in the name (e.g. kappa_per_m), so a
document is self-describing.  Unknown keys are rejected.  Presets fill
published parameter sets; quantities a preset cannot know (effective
area, group velocity, Gaussian/Lorentzian split, geometry, trajectory
counts) stay mandatory so no silent guess ships as a default.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import yaml

from .model import ConfigError, LineshapeSpec, PhysicalConfig, PulseSpec
from .propagator import RunSpec, StepScheme

_METHODS = ("ppr", "twa", "both")
_MODES = ("propagate", "oracle", "compare")
_VARIANTS = ("euler_maruyama", "drift_implicit_euler")

# published low-density pulse-propagation benchmark parameters
PRESETS = {
    "fig1_lowdensity": {
        "physical": {
            "rho_per_m3": 2.65e21,
            "kappa_per_m": 0.0,
            "n_bar": 0.0,
            "g_phi_per_sqrt_s": 9.16e-8,
        },
        "lineshape": {
            "center_wavelength_m": 7.94e-7,
            "fwhm_rad_per_s": 5.27e8,
        },
        "pulse": {
            "duration_s": 3.66e-12,
        },
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run description (physics + grid + execution)."""

    phys: PhysicalConfig
    n_tau: int
    n_z: int
    n_classes: int
    cutoff_fwhm: float
    method: str
    n_traj: int
    master_seed: int
    workers: int
    batch_size: int
    n_theta: int
    record_stride: int
    tau_substeps: int
    variant: str
    mode: str
    rho_per_m3: float | None = None
    a_eff_m2: float | None = None

    def methods(self) -> tuple[str, ...]:
        return ("ppr", "twa") if self.method == "both" else (self.method,)

    def scheme(self) -> StepScheme:
        return StepScheme(variant=self.variant,
                          tau_substeps=self.tau_substeps,
                          record_stride=self.record_stride)

    def run_spec(self, method: str, noise: bool = True) -> RunSpec:
        return RunSpec(phys=self.phys, n_tau=self.n_tau, n_z=self.n_z,
                       n_classes=self.n_classes, method=method,
                       n_traj=self.n_traj, master_seed=self.master_seed,
                       scheme=self.scheme(), batch_size=self.batch_size,
                       n_theta=self.n_theta, noise=noise,
                       cutoff_fwhm=self.cutoff_fwhm)


class _Reader:
    """Pulls typed values out of a nested mapping, collecting every error
    (path-qualified) instead of stopping at the first."""

    def __init__(self, doc: dict, errors: list, path: str = ""):
        self.doc = doc
        self.errors = errors
        self.path = path
        self.seen = set()

    def _key(self, name):
        return f"{self.path}{name}"

    def get(self, name, kind, default=None, required=False, minimum=None,
            positive=False):
        self.seen.add(name)
        if name not in self.doc:
            if required:
                self.errors.append(f"{self._key(name)}: missing required "
                                   f"field ({kind.__name__})")
                return default
            return default
        val = self.doc[name]
        if kind is float and isinstance(val, int) and not \
                isinstance(val, bool):
            val = float(val)
        if not isinstance(val, kind) or isinstance(val, bool):
            self.errors.append(f"{self._key(name)}: expected "
                               f"{kind.__name__}, got {type(val).__name__}")
            return default
        if positive and val <= 0:
            self.errors.append(f"{self._key(name)}: must be > 0")
            return default
        if minimum is not None and val < minimum:
            self.errors.append(f"{self._key(name)} must be >= {minimum}")
            return default
        return val

    def choice(self, name, options, default):
        val = self.get(name, str, default=default)
        if val not in options:
            self.errors.append(f"{self._key(name)}: must be one of "
                               f"{sorted(options)}")
            return default
        return val

    def section(self, name) -> "_Reader":
        self.seen.add(name)
        sub = self.doc.get(name, {})
        if not isinstance(sub, dict):
            self.errors.append(f"{self._key(name)}: expected a mapping")
            sub = {}
        return _Reader(sub, self.errors, path=f"{self._key(name)}.")

    def reject_unknown(self):
        for key in self.doc:
            if key not in self.seen:
                self.errors.append(f"{self._key(key)}: unknown key")


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(document) -> RunConfig:
    """Parse and validate a config document (YAML text or mapping).

    Raises ConfigError listing every problem found, each with the path of
    the offending key.
    """
    if isinstance(document, str):
        doc = yaml.safe_load(document)
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")

    errors: list[str] = []
    preset = doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; "
                              f"available: {sorted(PRESETS)}")
        doc = _deep_merge(PRESETS[preset], {k: v for k, v in doc.items()
                                            if k != "preset"})

    top = _Reader(doc, errors)
    phys = top.section("physical")
    g_phi = phys.get("g_phi_per_sqrt_s", float, required=True, minimum=0.0)
    kappa = phys.get("kappa_per_m", float, default=0.0, minimum=0.0)
    n_bar = phys.get("n_bar", float, default=0.0, minimum=0.0)
    v_g = phys.get("v_g_m_per_s", float, required=True, positive=True)
    z_max = phys.get("z_max_m", float, required=True, positive=True)
    rho_vol = phys.get("rho_per_m3", float, minimum=0.0)
    a_eff = phys.get("a_eff_m2", float, positive=True)
    rho_1d = phys.get("rho_1d_per_m", float, minimum=0.0)
    if rho_1d is None:
        if rho_vol is None:
            errors.append("physical: give rho_1d_per_m, or rho_per_m3 with "
                          "a_eff_m2")
        elif a_eff is None:
            errors.append("physical.a_eff_m2: missing required field "
                          "(float); the volumetric density needs an "
                          "effective area")
        else:
            rho_1d = rho_vol * a_eff
    elif rho_vol is not None:
        errors.append("physical: rho_1d_per_m and rho_per_m3 are mutually "
                      "exclusive")
    phys.reject_unknown()

    line = top.section("lineshape")
    lam = line.get("center_wavelength_m", float, required=True, positive=True)
    fwhm = line.get("fwhm_rad_per_s", float, minimum=0.0)
    frac = line.get("gaussian_fraction", float)
    sigma = line.get("gaussian_sigma_rad_per_s", float, minimum=0.0)
    hwhm = line.get("lorentzian_hwhm_rad_per_s", float, minimum=0.0)
    if fwhm is not None:
        if sigma is not None or hwhm is not None:
            errors.append("lineshape: give either fwhm_rad_per_s with "
                          "gaussian_fraction or the explicit widths, "
                          "not both")
        elif frac is None:
            errors.append("lineshape.gaussian_fraction: missing required "
                          "field (float); the total width needs a "
                          "Gaussian/Lorentzian split")
        elif not 0.0 <= frac <= 1.0:
            errors.append("lineshape.gaussian_fraction: must be in [0, 1]")
        else:
            # Gaussian FWHM = 2 sqrt(2 ln 2) sigma; Lorentzian FWHM = 2 hwhm
            sigma = frac * fwhm / 2.3548200450309493
            hwhm = (1.0 - frac) * fwhm / 2.0
    else:
        if sigma is None and hwhm is None:
            errors.append("lineshape: missing widths (fwhm_rad_per_s + "
                          "gaussian_fraction, or explicit sigma/hwhm)")
        sigma = sigma or 0.0
        hwhm = hwhm or 0.0
    line.reject_unknown()

    pulse = top.section("pulse")
    duration = pulse.get("duration_s", float, required=True, positive=True)
    area_factor = pulse.get("area_factor", float, default=1.0, minimum=0.0)
    offset = pulse.get("offset_s", float, default=0.0)
    half_window = pulse.get("half_window_s", float, default=0.0, minimum=0.0)
    pulse.reject_unknown()

    grid = top.section("grid")
    n_tau = grid.get("n_tau", int, required=True, minimum=2)
    n_z = grid.get("n_z", int, required=True, minimum=1)
    n_classes = grid.get("n_classes", int, default=1, minimum=1)
    cutoff = grid.get("cutoff_fwhm", float, default=4.0, positive=True)
    grid.reject_unknown()

    run = top.section("run")
    method = run.choice("method", _METHODS, "ppr")
    n_traj = run.get("trajectories", int, required=True, minimum=2)
    seed = run.get("seed", int, default=0, minimum=0)
    workers = run.get("workers", int, default=1, minimum=1)
    batch_size = run.get("batch_size", int, default=1024, minimum=1)
    n_theta = run.get("n_theta", int, default=64, minimum=1)
    stride = run.get("record_stride", int, default=1, minimum=1)
    nsub = run.get("tau_substeps", int, default=0, minimum=0)
    variant = run.choice("variant", _VARIANTS, "euler_maruyama")
    mode = run.choice("mode", _MODES, "propagate")
    run.reject_unknown()
    top.reject_unknown()

    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))

    try:
        phys_cfg = PhysicalConfig(
            g_phi=g_phi, kappa=kappa, n_bar=n_bar, rho_1d=rho_1d,
            lineshape=LineshapeSpec(center_wavelength=lam,
                                    gaussian_sigma=sigma,
                                    lorentzian_hwhm=hwhm),
            pulse=PulseSpec(
                inverse_width=1.0 / duration, offset=offset,
                window=None if half_window == 0.0 else
                (offset - half_window, offset + half_window),
                area_factor=area_factor),
            z_max=z_max, v_g=v_g)
    except ConfigError as exc:
        raise ConfigError(f"invalid config:\n  {exc}") from exc

    return RunConfig(phys=phys_cfg, n_tau=n_tau, n_z=n_z,
                     n_classes=n_classes, cutoff_fwhm=cutoff, method=method,
                     n_traj=n_traj, master_seed=seed, workers=workers,
                     batch_size=batch_size, n_theta=n_theta,
                     record_stride=stride, tau_substeps=nsub,
                     variant=variant, mode=mode, rho_per_m3=rho_vol,
                     a_eff_m2=a_eff)


def emit_config(cfg: RunConfig) -> dict:
    """Canonical fully explicit document; parse(emit(cfg)) == cfg."""
    p = cfg.phys
    physical = {
        "g_phi_per_sqrt_s": p.g_phi,
        "kappa_per_m": p.kappa,
        "n_bar": p.n_bar,
        "v_g_m_per_s": p.v_g,
        "z_max_m": p.z_max,
    }
    if cfg.rho_per_m3 is not None:
        physical["rho_per_m3"] = cfg.rho_per_m3
        physical["a_eff_m2"] = cfg.a_eff_m2
    else:
        physical["rho_1d_per_m"] = p.rho_1d
    return {
        "physical": physical,
        "lineshape": {
            "center_wavelength_m": p.lineshape.center_wavelength,
            "gaussian_sigma_rad_per_s": p.lineshape.gaussian_sigma,
            "lorentzian_hwhm_rad_per_s": p.lineshape.lorentzian_hwhm,
        },
        "pulse": {
            "duration_s": 1.0 / p.pulse.inverse_width,
            "area_factor": p.pulse.area_factor,
            "offset_s": p.pulse.offset,
            "half_window_s": 0.5 * (p.pulse.window[1] - p.pulse.window[0]),
        },
        "grid": {
            "n_tau": cfg.n_tau,
            "n_z": cfg.n_z,
            "n_classes": cfg.n_classes,
            "cutoff_fwhm": cfg.cutoff_fwhm,
        },
        "run": {
            "method": cfg.method,
            "trajectories": cfg.n_traj,
            "seed": cfg.master_seed,
            "workers": cfg.workers,
            "batch_size": cfg.batch_size,
            "n_theta": cfg.n_theta,
            "record_stride": cfg.record_stride,
            "tau_substeps": cfg.tau_substeps,
            "variant": cfg.variant,
            "mode": cfg.mode,
        },
    }


def emit_yaml(cfg: RunConfig) -> str:
    return yaml.safe_dump(emit_config(cfg), sort_keys=True)
