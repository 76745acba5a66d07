"""TOML run configuration with unit-suffixed keys.

Every physical quantity carries its unit in the key name (``_ghz``, ``_mhz``,
``_khz``, ``_ns``, ``_us``); values are converted to SI on load.  Unknown keys
are rejected with a suggestion of the closest valid key.
"""
from __future__ import annotations

import difflib
import hashlib
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .device import DeviceParams
from .dynamics import SolverConfig
from .pulses import PulseParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

UNIT_SCALE = {"ghz": 1e9, "mhz": 1e6, "khz": 1e3, "ns": 1e-9, "us": 1e-6}

_DEFAULTS = {
    "seed": 20100913,
    "output_dir": "results",
    "device": {
        "omega1_ghz": 5.854, "omega2_ghz": 5.528, "j_mhz": DeviceParams().J / 1e6,
        "alpha1_mhz": 224.0, "alpha2_mhz": 255.0,
        "t1_us": [1.6, 1.5], "t2_us": [1.6, 1.5],
        "m12": 0.5, "m21": 0.5, "zeta_khz": 200.0, "zz_enabled": True,
        "beta_ii": 1.0, "beta_iz": 0.77, "beta_zi": 0.72, "beta_zz": 0.6,
        "omega_r_ghz": 9.72, "kappa_mhz": 1.0, "chi1_mhz": 0.55, "chi2_mhz": 0.3,
    },
    "pulses": {
        "sq_sigma_ns": 4.0, "sq_drag_scale": -1.4, "cr_drag_scale": 0.8,
        "cr_ramp_sigma_ns": 12.0, "tg_includes_ramps": True,
    },
    "solver": {
        "integrator": "fixed", "dt_ns": 0.01, "rtol": 1e-10, "atol": 1e-12, "model": "effective",
    },
    "experiment": {
        "amplitude_mhz": 553.0, "t_g_ns": 220.0,
        "sweep_min_mhz": 20.0, "sweep_max_mhz": 700.0, "sweep_points": 20,
        "tg_max_ns": 800.0, "tg_step_ns": 8.0,
        "presets_mhz": [139.0, 220.0, 349.0, 553.0],
        "noise": True, "readout_sigma": 0.0, "shots": 0,
        "target_jeff_mhz": 1.4, "rabi_t_max_ns": 400.0, "rabi_spacing_ns": 2.0,
        "threads": 1,
    },
}


class ConfigError(ValueError):
    pass


def _split_unit(key: str):
    stem, _, suffix = key.rpartition("_")
    return (stem, suffix) if suffix in UNIT_SCALE else (key, None)


def _check_keys(section: str, given: dict, allowed: dict):
    by_stem = {_split_unit(k)[0]: k for k in allowed}
    for key in given:
        if key in allowed:
            continue
        stem, unit = _split_unit(key)
        where = f"[{section}] " if section else ""
        if unit is not None and stem in by_stem:
            raise ConfigError(f"unit suffix mismatch for {where}{key!r}: expected {by_stem[stem]!r}")
        near = difflib.get_close_matches(key, list(allowed), n=1, cutoff=0.0)
        hint = f"; nearest valid key is {near[0]!r}" if near else ""
        raise ConfigError(f"unknown key {where}{key!r}{hint}")


def _typecheck(section: str, key: str, value, default):
    where = f"[{section}] {key}" if section else key
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
    elif isinstance(default, (int, float)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                             for v in value)
        # per-qubit keys also accept one number for both qubits
        if not ok and not (key in ("t1_us", "t2_us") and isinstance(value, (int, float))):
            raise ConfigError(f"{where} must be a list of numbers")


def merge(data: dict) -> dict:
    """Validate ``data`` against the schema and fill in defaults."""
    top = {k: v for k, v in _DEFAULTS.items() if not isinstance(v, dict)}
    sections = {k: v for k, v in _DEFAULTS.items() if isinstance(v, dict)}
    _check_keys("", data, _DEFAULTS)
    out = {}
    for k, default in top.items():
        v = data.get(k, default)
        _typecheck("", k, v, default)
        out[k] = v
    for name, defaults in sections.items():
        given = data.get(name, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{name}] must be a table")
        _check_keys(name, given, defaults)
        sec = {}
        for k, default in defaults.items():
            v = given.get(k, default)
            _typecheck(name, k, v, default)
            sec[k] = v
        out[name] = sec
    return out


def _pair(v, key):
    if isinstance(v, (int, float)):
        return float(v), float(v)
    if len(v) != 2:
        raise ConfigError(f"[device] {key} needs one value or two (one per qubit)")
    return float(v[0]), float(v[1])


@dataclass
class RunConfig:
    device: DeviceParams
    pulses: PulseParams
    solver: SolverConfig
    experiment: dict
    output_dir: Path
    seed: int
    effective: dict = field(default_factory=dict)

    def to_toml(self) -> str:
        return dump_toml(self.effective)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()[:16]


def build(data: dict) -> RunConfig:
    eff = merge(data)
    d, pz, s, e = eff["device"], eff["pulses"], eff["solver"], eff["experiment"]
    t1 = _pair(d["t1_us"], "t1_us")
    t2 = _pair(d["t2_us"], "t2_us")
    for q in (0, 1):
        if t2[q] > 2 * t1[q]:
            raise ConfigError(f"[device] t2_us > 2*t1_us for qubit {q + 1} is unphysical")
    try:
        dev = DeviceParams(
            omega1=d["omega1_ghz"] * 1e9, omega2=d["omega2_ghz"] * 1e9, J=d["j_mhz"] * 1e6,
            alpha1=d["alpha1_mhz"] * 1e6, alpha2=d["alpha2_mhz"] * 1e6,
            T1_1=t1[0] * 1e-6, T1_2=t1[1] * 1e-6, T2_1=t2[0] * 1e-6, T2_2=t2[1] * 1e-6,
            m12=d["m12"], m21=d["m21"], zeta=d["zeta_khz"] * 1e3, zz_enabled=d["zz_enabled"],
            beta=(d["beta_ii"], d["beta_iz"], d["beta_zi"], d["beta_zz"]),
            omegaR=d["omega_r_ghz"] * 1e9, kappa=d["kappa_mhz"] * 1e6,
            chi1=d["chi1_mhz"] * 1e6, chi2=d["chi2_mhz"] * 1e6)
        pulses = PulseParams(sq_sigma=pz["sq_sigma_ns"] * 1e-9, sq_drag_scale=pz["sq_drag_scale"],
                             cr_drag_scale=pz["cr_drag_scale"],
                             cr_ramp_sigma=pz["cr_ramp_sigma_ns"] * 1e-9,
                             tg_includes_ramps=pz["tg_includes_ramps"])
        solver = SolverConfig(s["integrator"], s["dt_ns"] * 1e-9, s["rtol"], s["atol"], s["model"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if e["threads"] < 1 or e["sweep_points"] < 2 or e["tg_step_ns"] <= 0:
        raise ConfigError("[experiment] threads >= 1, sweep_points >= 2 and tg_step_ns > 0 required")
    return RunConfig(dev, pulses, solver, e, Path(eff["output_dir"]), int(eff["seed"]), eff)


def load_toml(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def parse_config(path=None) -> RunConfig:
    """Load a TOML file; ``None`` or an empty file gives the default device."""
    return build({} if path is None else load_toml(path))


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def dump_toml(data: dict) -> str:
    lines = [f"{k} = {_toml_value(v)}" for k, v in data.items() if not isinstance(v, dict)]
    for name, sec in data.items():
        if isinstance(sec, dict):
            lines.append(f"\n[{name}]")
            lines.extend(f"{k} = {_toml_value(v)}" for k, v in sec.items())
    return "\n".join(lines) + "\n"
