"""Config documents and the command-line entry points."""

import json
import math
import os

import numpy as np
import pytest
import yaml

from phasesim.cli import main
from phasesim.config import PRESETS, emit_yaml, parse_config
from phasesim.model import ConfigError

A = 1e12
G_PHI = math.sqrt(2.0 * A / 1e6)


def _doc(**over):
    doc = {
        "physical": {
            "g_phi_per_sqrt_s": G_PHI,
            "kappa_per_m": 1e-2,
            "n_bar": 0.0,
            "v_g_m_per_s": 2e8,
            "z_max_m": 50.0,
            "rho_1d_per_m": 0.0,
        },
        "lineshape": {
            "center_wavelength_m": 7.94e-7,
            "lorentzian_hwhm_rad_per_s": 2e10,
        },
        "pulse": {"duration_s": 1.0 / A},
        "grid": {"n_tau": 24, "n_z": 10},
        "run": {"trajectories": 300, "batch_size": 100, "n_theta": 8,
                "seed": 11, "method": "both"},
    }
    for section, vals in over.items():
        doc.setdefault(section, {}).update(vals)
    return doc


def test_round_trip_through_yaml():
    cfg = parse_config(_doc())
    again = parse_config(emit_yaml(cfg))
    assert again == cfg


def test_all_errors_reported_at_once():
    doc = _doc(physical={"kappa_per_m": -1.0, "bogus": 1},
               run={"trajectories": 1, "variant": "heun"})
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    text = str(err.value)
    assert "physical.kappa_per_m must be >= 0" in text
    assert "physical.bogus: unknown key" in text
    assert "run.trajectories must be >= 2" in text
    assert "run.variant" in text


def test_missing_required_fields_named():
    with pytest.raises(ConfigError) as err:
        parse_config({"physical": {}, "run": {}})
    text = str(err.value)
    for key in ("g_phi_per_sqrt_s", "v_g_m_per_s", "z_max_m",
                "pulse.duration_s", "grid.n_tau", "run.trajectories"):
        assert key in text


def test_density_specifications_are_exclusive():
    doc = _doc(physical={"rho_per_m3": 1e20})
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(doc)
    doc = _doc()
    del doc["physical"]["rho_1d_per_m"]
    doc["physical"]["rho_per_m3"] = 1e20
    with pytest.raises(ConfigError, match="a_eff_m2"):
        parse_config(doc)
    doc["physical"]["a_eff_m2"] = 1e-10
    assert parse_config(doc).phys.rho_1d == pytest.approx(1e10)


def test_total_width_split_into_components():
    doc = _doc(lineshape={"fwhm_rad_per_s": 5.27e8, "gaussian_fraction": 0.5})
    del doc["lineshape"]["lorentzian_hwhm_rad_per_s"]
    cfg = parse_config(doc)
    ls = cfg.phys.lineshape
    assert ls.gaussian_sigma == pytest.approx(0.5 * 5.27e8
                                              / 2.3548200450309493)
    assert ls.lorentzian_hwhm == pytest.approx(0.25 * 5.27e8)


def test_preset_fills_published_values():
    doc = {
        "preset": "fig1_lowdensity",
        "physical": {"a_eff_m2": 1e-10, "v_g_m_per_s": 2e8,
                     "z_max_m": 1.0},
        "lineshape": {"gaussian_fraction": 0.5},
        "grid": {"n_tau": 16, "n_z": 4},
        "run": {"trajectories": 10},
    }
    cfg = parse_config(doc)
    p = PRESETS["fig1_lowdensity"]["physical"]
    assert cfg.phys.g_phi == p["g_phi_per_sqrt_s"]
    assert cfg.phys.rho_1d == pytest.approx(p["rho_per_m3"] * 1e-10)
    with pytest.raises(ConfigError, match="unknown preset"):
        parse_config({"preset": "fig9"})


def _write_config(tmp_path, doc):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_run_command_outputs(tmp_path):
    cfg_path = _write_config(tmp_path, _doc())
    out = tmp_path / "out"
    assert main(["run", "--config", cfg_path, "--out", str(out)]) == 0
    for name in ("squeezing.csv", "quadratures.csv", "flux.csv",
                 "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["run"]["seed"] == 11
    assert manifest["derived"]["photon_number"] == pytest.approx(1e6)
    for method in ("ppr", "twa"):
        assert manifest["methods"][method]["trajectories"] == 300
    header, *rows = (out / "flux.csv").read_text().splitlines()
    assert header == "z,flux,flux_err,method"
    assert len(rows) == 2 * 11  # both methods, n_z + 1 slices


def test_run_command_worker_invariant_bytes(tmp_path):
    cfg_path = _write_config(tmp_path, _doc())
    outs = []
    for workers in (1, 3):
        out = tmp_path / f"w{workers}"
        assert main(["run", "--config", cfg_path, "--out", str(out),
                     "--workers", str(workers)]) == 0
        outs.append({n: (out / n).read_bytes()
                     for n in ("squeezing.csv", "quadratures.csv",
                               "flux.csv")})
    assert outs[0] == outs[1]


def test_run_command_bad_config_exit_code(tmp_path):
    doc = _doc()
    doc["run"]["trajectories"] = 1
    cfg_path = _write_config(tmp_path, doc)
    assert main(["run", "--config", cfg_path,
                 "--out", str(tmp_path / "x")]) == 2


def test_sweep_command(tmp_path):
    doc = _doc(run={"method": "twa", "trajectories": 100})
    cfg_path = _write_config(tmp_path, doc)
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", cfg_path, "--axis", "kappa",
                 "--values", "0.0,1e-2", "--out", str(out)]) == 0
    index = (out / "index.csv").read_text().splitlines()
    assert index[0] == "kappa,directory,status"
    assert len(index) == 3
    for i in range(2):
        child = out / f"kappa_{i:03d}"
        assert (child / "manifest.json").exists()
    # children get distinct derived seeds
    seeds = [json.loads((out / f"kappa_{i:03d}" / "manifest.json")
                        .read_text())["config"]["run"]["seed"]
             for i in range(2)]
    assert seeds[0] != seeds[1]
    assert main(["sweep", "--config", cfg_path, "--axis", "kappa",
                 "--values", ",", "--out", str(out)]) == 2


def test_oracle_command(tmp_path):
    assert main(["oracle", "--g", "1.0", "--gamma", "0.2", "--alpha0",
                 "2.0", "--t-max", "0.5", "--records", "2",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "oracle.csv").read_text().splitlines()
    assert lines[0] == "t,theta,n,var_normal,var_symmetric,p_excited"
    assert len(lines) == 1 + 3 * 8   # t=0 plus 2 records, 8 angles


def test_compare_command(tmp_path):
    assert main(["compare", "--g", "1.0", "--gamma", "0.1", "--alpha0",
                 "10.0", "--t-max", "0.3", "--trajectories", "20000",
                 "--steps", "600", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    assert lines[0] == "observable,simulated,exact,se,z,method"
    assert any(row.endswith("ppr") for row in lines[1:])
    assert any(row.endswith("twa") for row in lines[1:])
