"""Command-line front end.

    crsim <subcommand> [--config FILE] [--output-dir DIR] [--seed N] ...

Results are written as CSV plus a JSON sidecar into the output directory,
together with ``config_effective.toml``.  The output directory is taken from
``--output-dir``, then ``$CRSIM_OUTPUT_DIR``, then the config file.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures.  Failures also print a one-line JSON error record to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import experiments as ex
from .config import ConfigError, RunConfig, build, load_toml
from .dynamics import IntegrationError, NoOscillationError
from .pulses import CalibrationError
from .tomo import MLEConvergenceError, ReadoutModel, TomographyError, chi_to_json

log = logging.getLogger("crsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
OUTPUT_ENV = "CRSIM_OUTPUT_DIR"
SUBCOMMANDS = ("calibrate-j", "jeff-sweep", "concurrence-scan", "bell", "qpt", "identity-qpt",
               "rabi", "selftest")
NUMERIC_ERRORS = (CalibrationError, IntegrationError, MLEConvergenceError, NoOscillationError,
                  TomographyError, np.linalg.LinAlgError, FloatingPointError)


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crsim", description="Cross-resonance gate simulator")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="TOML configuration file")
    ap.add_argument("--output-dir", help="directory for result files")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--threads", type=int, help="worker threads for grid points")
    ap.add_argument("--noise", type=_on_off, help="decoherence on|off")
    ap.add_argument("--amplitude-mhz", type=float, help="CR drive amplitude")
    ap.add_argument("--tg-ns", type=float, help="CR gate time")
    ap.add_argument("--integrator", choices=("fixed", "adaptive"))
    ap.add_argument("--dt-ns", type=float, help="fixed integrator step")
    ap.add_argument("--model", choices=("effective", "direct"))
    ap.add_argument("--readout-sigma", type=float, help="Gaussian noise on the joint readout")
    ap.add_argument("--target-jeff-mhz", type=float, help="calibrate-j target")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _apply_flags(data: dict, args) -> dict:
    """Flags override the matching config keys."""
    def put(section, key, value):
        if value is not None:
            if section is None:
                data[key] = value
            else:
                data.setdefault(section, {})[key] = value

    put(None, "seed", args.seed)
    put(None, "output_dir", args.output_dir)
    put("experiment", "threads", args.threads)
    put("experiment", "noise", args.noise)
    put("experiment", "amplitude_mhz", args.amplitude_mhz)
    put("experiment", "t_g_ns", args.tg_ns)
    put("experiment", "readout_sigma", args.readout_sigma)
    put("experiment", "target_jeff_mhz", args.target_jeff_mhz)
    put("solver", "integrator", args.integrator)
    put("solver", "dt_ns", args.dt_ns)
    put("solver", "model", args.model)
    return data


def load(args) -> RunConfig:
    data = load_toml(args.config) if args.config else {}
    if args.output_dir is None and os.environ.get(OUTPUT_ENV):
        data["output_dir"] = os.environ[OUTPUT_ENV]
    return build(_apply_flags(data, args))


def _readout(cfg: RunConfig) -> ReadoutModel:
    e = cfg.experiment
    return ReadoutModel(cfg.device.beta, e["readout_sigma"], e["shots"] or None)


def _finish(result: ex.ExperimentResult, cfg: RunConfig, seed: int, stem: str | None = None):
    result.metadata.update(config_digest=cfg.digest, master_seed=cfg.seed, seed=seed)
    paths = result.write(cfg.output_dir, stem)
    for path in paths:
        print(path)
    return paths


def _tg_grid(e) -> np.ndarray:
    n = int(np.floor(e["tg_max_ns"] / e["tg_step_ns"] + 1e-9))
    return np.arange(n + 1) * e["tg_step_ns"] * 1e-9


def run_subcommand(name: str, cfg: RunConfig, single_amplitude: bool = False) -> int:
    """Run one subcommand; ``single_amplitude`` restricts concurrence-scan to amplitude_mhz."""
    p, pp, solver, e = cfg.device, cfg.pulses, cfg.solver, cfg.experiment
    threads = e["threads"]
    seed = ex.stable_seed(cfg.seed, name)
    if name == "selftest":
        from .selftest import run
        return EXIT_OK if run(sys.stdout) else EXIT_NUMERIC
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "config_effective.toml").write_text(cfg.to_toml())
    amplitudes = np.geomspace(e["sweep_min_mhz"], e["sweep_max_mhz"], e["sweep_points"]) * 1e6
    if name == "calibrate-j":
        target = e["target_jeff_mhz"] * 1e6
        j = ex.calibrate_j(p, target, amplitudes, pp=pp, solver=solver, threads=threads)
        sweep = ex.run_jeff_sweep(p.replace(J=j), amplitudes, pp, solver, threads)
        sweep.name = "calibrate_j"
        sweep.scalars.update(calibrated_J=j, target_max_jeff=target)
        _finish(sweep, cfg, seed)
        calibrated = dict(cfg.effective)
        calibrated["device"] = dict(calibrated["device"], j_mhz=j / 1e6)
        (cfg.output_dir / "config_calibrated.toml").write_text(
            RunConfig(p, pp, solver, e, cfg.output_dir, cfg.seed, calibrated).to_toml())
        print(f"J = {j / 1e6:.6f} MHz")
    elif name == "jeff-sweep":
        _finish(ex.run_jeff_sweep(p, amplitudes, pp, solver, threads), cfg, seed)
    elif name == "concurrence-scan":
        presets = [e["amplitude_mhz"]] if single_amplitude else e["presets_mhz"]
        for a in presets:
            res = ex.run_concurrence_scan(p, a * 1e6, _tg_grid(e), e["noise"], _readout(cfg),
                                          seed, pp, solver, threads)
            _finish(res, cfg, seed)
    elif name == "bell":
        res = ex.run_bell(p, e["noise"], _readout(cfg), seed, pp, solver)
        _finish(res, cfg, seed)
        print(f"F = {res.series['fidelity'][0]:.6f}  C = {res.series['concurrence'][0]:.6f}")
    elif name in ("qpt", "identity-qpt"):
        gate = "cr" if name == "qpt" else "identity"
        tg = e["t_g_ns"] * 1e-9 if gate == "identity" else None
        res = ex.run_qpt(p, gate, e["noise"], _readout(cfg), seed, tg, None, pp, solver, threads)
        prefix = "" if gate == "cr" else "identity_"
        res.metadata.update(config_digest=cfg.digest, master_seed=cfg.seed)
        (cfg.output_dir / f"{prefix}chi.json").write_text(
            chi_to_json(res.matrices["chi"], chi_raw=ex._complex_pairs(res.matrices["chi_raw"]),
                        target=res.scalars["target"]))
        rows = ["metric,value"] + [f"{k},{v:.12g}" for k, v in res.scalars.items()
                                   if isinstance(v, float)]
        (cfg.output_dir / f"{prefix}fidelities.csv").write_text("\n".join(rows) + "\n")
        _finish(res, cfg, seed, f"{prefix}qpt_outputs")
        print(f"F_p = {res.scalars['process_fidelity']:.6f}  F_g = {res.scalars['gate_fidelity']:.6f}")
    elif name == "rabi":
        res = ex.run_rabi(p, e["amplitude_mhz"] * 1e6, e["rabi_t_max_ns"] * 1e-9,
                          e["rabi_spacing_ns"] * 1e-9, e["noise"], pp, solver)
        _finish(res, cfg, seed)
    return EXIT_OK


def _error(kind: str, exc: Exception, code: int) -> int:
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    try:
        return run_subcommand(args.subcommand, cfg, args.amplitude_mhz is not None)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    except NUMERIC_ERRORS as exc:
        return _error("numerical", exc, EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
