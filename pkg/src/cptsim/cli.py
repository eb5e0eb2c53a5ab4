"""Command-line front end.

    cptsim --config run.ini --out results/ [--campaign NAME] [--jobs N] [--no-feedback]

Exit codes: 0 success, 2 config error, 3 solver error, 4 fit failures on
more than 10% of grid cells.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import CAMPAIGNS, ConfigError, load_config, parse_config
from .experiments import (
    calibrate_repump_rabi,
    measure_resonance,
    predict_full_overlap,
    run_no_repump,
    run_repump_sweep,
    SweepResult,
)
from .lineshape import FitError, voigt
from .liouvillian import SolverError, assemble_channels, build_liouvillian, steady_state
from .model import TWO_PI, build_hamiltonian, LevelIndex
from .spectroscopy import (
    absorption_coefficients,
    calibrate_absorption_scale,
    small_signal_params,
)
from .svg import LinePlot

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_FIT = 0, 2, 3, 4


class CampaignFailed(RuntimeError):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _num(x):
    """Plain round-trip text for a scalar (numpy scalars print as Python ones)."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write(path, text, written):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    written.append(path.name)


def _header(cfg):
    return [f"cptsim {__version__}", f"config_hash = {cfg.hash}", f"campaign = {cfg.campaign}"]


def _comment_block(lines):
    return "".join(f"# {line}\n" for line in lines)


def _scale(cfg):
    return calibrate_absorption_scale(small_signal_params(cfg.params), cfg.geometry,
                                      cfg.transparency, cfg.feedback)


def _operating_params(cfg):
    return cfg.intensity.apply(cfg.params, cfg.cpt_intensity, cfg.repump_intensity)


def _check_cells(sweep):
    failed = [c for c in sweep.cells if not c.ok]
    if len(failed) <= 0.1 * len(sweep.cells):
        return
    solver = sum(c.error.startswith(("SingularSystem", "NonPhysicalState", "PropagationError",
                                     "SolverError")) for c in failed)
    code = EXIT_SOLVER if solver > len(failed) - solver else EXIT_FIT
    raise CampaignFailed(f"{len(failed)} of {len(sweep.cells)} cells failed", code)


def cmd_steady_state(cfg, out, written):
    p = _operating_params(cfg).replace(delta=cfg.delta)
    rho = steady_state(build_liouvillian(build_hamiltonian(p), assemble_channels(p)))
    lines = [_comment_block(_header(cfg) + [f"delta_rad_s = {_num(cfg.delta)}"]),
             "row,col,re,im\n"]
    for i in range(rho.shape[0]):
        for j in range(rho.shape[1]):
            lines.append(f"{LevelIndex(i).name},{LevelIndex(j).name},"
                         f"{_num(rho[i, j].real)},{_num(rho[i, j].imag)}\n")
    _write(out / "steady_state.csv", "".join(lines), written)
    scale = _scale(cfg)
    alpha = absorption_coefficients(rho, p, scale)
    text = _comment_block(_header(cfg) + [f"kappa_per_m = {_num(scale.kappa)}"])
    text += "mode,alpha_per_m\n" + "".join(f"{m.value},{_num(a)}\n" for m, a in alpha.items())
    _write(out / "absorption.csv", text, written)


def cmd_spectrum(cfg, out, written):
    scale = _scale(cfg)
    spec, fit = measure_resonance(_operating_params(cfg), cfg.geometry, scale, cfg.grid,
                                  cfg.feedback)
    spec.metadata = {"config_hash": cfg.hash, "campaign": cfg.campaign,
                     "cpt_intensity_uW_cm2": cfg.cpt_intensity,
                     "repump_intensity_uW_cm2": cfg.repump_intensity,
                     "kappa_per_m": scale.kappa}
    _write(out / "spectrum.csv", spec.to_csv(), written)
    _write(out / "fit.csv", fit.to_csv(_header(cfg)), written)
    khz = spec.deltas / TWO_PI / 1e3
    plot = LinePlot("CPT resonance", "two-photon detuning (kHz)", "transmission")
    plot.add(khz, spec.transmission, "simulated", markers=len(khz) <= 60)
    plot.add(khz, voigt(spec.deltas, fit.params), "Voigt fit", dashed=True)
    plot.save(out / "spectrum.svg")
    written.append("spectrum.svg")
    if not fit.converged:
        raise CampaignFailed("Voigt fit did not converge", EXIT_FIT)


def _sweep_plots(sweep, out, written, prefix, title):
    rps = np.array(sweep.repump_intensities)
    for attr, ylabel, factor in (("contrast", "contrast (%)", 100.0),
                                 ("fwhm", "FWHM (kHz)", 1 / (TWO_PI * 1e3))):
        plot = LinePlot(f"{title}: {attr}", "repump intensity (uW/cm^2)", ylabel)
        values = sweep.grid(attr) * factor
        for i, cpt in enumerate(sweep.cpt_intensities):
            plot.add(rps, values[i], f"CPT {cpt:g} uW/cm^2", markers=True)
        name = f"{prefix}_{attr}.svg"
        plot.save(out / name)
        written.append(name)


def cmd_sweep_repump(cfg, out, written):
    scale = _scale(cfg)
    sweep = run_repump_sweep(cfg.intensity, cfg.params, cfg.geometry, scale, cfg.grid,
                             cfg.feedback, cfg.jobs)
    _write(out / "sweep_repump.csv", sweep.to_csv(_header(cfg)), written)
    _sweep_plots(sweep, out, written, "sweep_repump", "Repump sweep")
    _check_cells(sweep)


def cmd_sweep_cpt(cfg, out, written):
    """No-repump curve plus, per CPT intensity, the best repump setting."""
    scale = _scale(cfg)
    no_rp = run_no_repump(cfg.intensity, cfg.params, cfg.geometry, scale, cfg.grid,
                          cfg.feedback, cfg.jobs)
    _write(out / "sweep_cpt.csv", no_rp.to_csv(_header(cfg) + ["repump off"]), written)
    cpts = np.array(no_rp.cpt_intensities)
    series = [("no repump", no_rp.contrast[:, 0], no_rp.fwhm[:, 0])]
    if any(r > 0 for r in cfg.intensity.repump_intensities):
        full = run_repump_sweep(cfg.intensity, cfg.params, cfg.geometry, scale, cfg.grid,
                                cfg.feedback, cfg.jobs)
        best = []
        for i in range(len(full.cpt_intensities)):
            row = [full.cell(i, j) for j in range(len(full.repump_intensities))]
            ok = [c for c in row if c.ok]
            best.append(max(ok, key=lambda c: c.contrast) if ok else row[0])
        opt = SweepResult(full.cpt_intensities, tuple(c.repump_intensity for c in best), best)
        _write(out / "sweep_cpt_optimum.csv",
               opt.to_csv(_header(cfg) + ["best repump intensity per CPT intensity"]), written)
        series.append(("repump optimum", np.array([c.contrast for c in best]),
                       np.array([c.fwhm for c in best])))
        _check_cells(full)
    for k, (ylabel, factor) in enumerate((("contrast (%)", 100.0),
                                          ("FWHM (kHz)", 1 / (TWO_PI * 1e3)))):
        attr = ("contrast", "fwhm")[k]
        plot = LinePlot(f"CPT intensity scan: {attr}", "CPT intensity (uW/cm^2)", ylabel)
        for label, c, w in series:
            plot.add(cpts, (c, w)[k] * factor, label, markers=True)
        name = f"sweep_cpt_{attr}.svg"
        plot.save(out / name)
        written.append(name)
    _check_cells(no_rp)


def cmd_calibrate(cfg, out, written):
    scale = _scale(cfg)
    rows = [("kappa_per_m", scale.kappa), ("target_transparency", cfg.transparency)]
    if cfg.measured_file is not None:
        measured = SweepResult.from_csv(Path(cfg.measured_file).read_text(encoding="utf-8"))
        cal = calibrate_repump_rabi(measured, cfg.params, cfg.geometry, scale, cfg.intensity,
                                    cfg.grid)
        rows += [("pi_rabi_rad_s_per_sqrt_uW_cm2", cal.pi_rabi_per_sqrt),
                 ("off_res_detuning_rad_s", cal.off_res_detuning),
                 ("residual", cal.residual), ("converged", cal.converged),
                 ("degenerate", cal.degenerate), ("iterations", cal.iterations)]
    text = _comment_block(_header(cfg)) + "quantity,value\n"
    text += "".join(f"{k},{_num(v)}\n" for k, v in rows)
    _write(out / "calibration.csv", text, written)


def cmd_predict(cfg, out, written):
    scale = _scale(cfg)
    imap = replace(cfg.intensity, cpt_intensities=cfg.predict_cpt,
                   repump_intensities=cfg.predict_repump)
    pred = predict_full_overlap(cfg.params, cfg.geometry, scale, imap, cfg.grid,
                                feedback=cfg.feedback, jobs=cfg.jobs)
    text = _comment_block(_header(cfg))
    text += ("contrast,fwhm_rad_s,cpt_intensity_uW_cm2,repump_intensity_uW_cm2,"
             "no_repump_contrast,improvement\n")
    text += (f"{_num(pred.contrast)},{_num(pred.fwhm)},{_num(pred.cpt_intensity)},"
             f"{_num(pred.repump_intensity)},{_num(pred.no_repump_contrast)},{_num(pred.improvement)}\n")
    _write(out / "predict_full_overlap.csv", text, written)
    _write(out / "predict_full_overlap_grid.csv", pred.sweep.to_csv(_header(cfg)), written)
    _sweep_plots(pred.sweep, out, written, "predict_full_overlap", "Full overlap")
    _check_cells(pred.sweep)


COMMANDS = {
    "steady-state": cmd_steady_state,
    "spectrum": cmd_spectrum,
    "sweep-repump": cmd_sweep_repump,
    "sweep-cpt": cmd_sweep_cpt,
    "calibrate": cmd_calibrate,
    "predict-full-overlap": cmd_predict,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="cptsim", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="INI config file (defaults: calibrated operating point)")
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--campaign", choices=CAMPAIGNS, help="override [run] campaign")
    ap.add_argument("--jobs", type=int, help="worker processes for grid campaigns")
    ap.add_argument("--no-feedback", action="store_true",
                    help="keep Rabi frequencies fixed along the cell")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.campaign:
        overrides[("run", "campaign")] = args.campaign
    if args.no_feedback:
        overrides[("run", "feedback")] = "false"
    if args.jobs is not None:
        overrides[("run", "jobs")] = str(args.jobs)
    try:
        cfg = load_config(args.config, overrides) if args.config else parse_config("", ".", overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    code, message = EXIT_OK, "ok"
    try:
        COMMANDS[cfg.campaign](cfg, out, written)
    except CampaignFailed as exc:
        code, message = exc.code, str(exc)
    except SolverError as exc:
        delta = getattr(exc, "delta", None)
        where = f" at delta={delta:.6g} rad/s" if delta is not None else ""
        code, message = EXIT_SOLVER, f"solver error{where}: {exc}"
    except FitError as exc:
        code, message = EXIT_FIT, f"fit error: {exc}"
    manifest = {
        "version": __version__,
        "config_hash": cfg.hash,
        "campaign": cfg.campaign,
        "exit_code": code,
        "message": message,
        "numpy": np.__version__,
        "files": sorted(written),
        "config": cfg.text,
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if code != EXIT_OK:
        print(message, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
