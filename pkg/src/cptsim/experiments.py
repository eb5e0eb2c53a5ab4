"""Measurement campaigns: repump sweeps, no-repump curves, calibration and
the full-overlap prediction."""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .lineshape import FitError, fit_voigt
from .liouvillian import SolverError
from .model import TWO_PI, ModelParams
from .spectroscopy import CellGeometry, scan_spectrum

MEASURED_CPT_INTENSITIES = (1440.0, 4320.0, 5760.0, 8640.0, 12960.0)
MEASURED_REPUMP_INTENSITIES = (0.0, 30.0, 100.0, 200.0, 300.0, 600.0, 1000.0, 2000.0, 3000.0,
                            6000.0, 10000.0)
# denser CPT intensity scan for the repump-off curve
SCAN_CPT_INTENSITIES = (1440.0, 2880.0, 4320.0, 5760.0, 7200.0, 8640.0, 10800.0, 12960.0)
# the full-overlap optimum sits above the measured CPT range, so the
# prediction grid extends it
PREDICTION_CPT_INTENSITIES = MEASURED_CPT_INTENSITIES + (19440.0, 25920.0)
PREDICTION_REPUMP_INTENSITIES = (0.0, 300.0, 1000.0, 3000.0, 10000.0, 30000.0)

# Effective parameters matched to the measured campaign (see
# tools/search_effective_params.py).  Rates and detunings in Hz, Rabi
# constants in rad/s per sqrt(uW/cm^2).
CALIBRATED = {
    "gamma_pop_hz": 610.0,
    "gamma_coh_hz": 4300.0,
    "off_res_detuning_hz": 13.5e6,
    "sigma_rabi_per_sqrt": 4.55e4,
    "pi_rabi_per_sqrt": 8.6e4,
}


@dataclass(frozen=True)
class IntensityMap:
    """Intensities in uW/cm^2 and the sqrt(intensity) -> Rabi constants.

    ``sigma_split`` and ``pi_split`` are the power fractions carried by the
    first mode of each pair (SigmaA, PiA).
    """

    cpt_intensities: tuple
    repump_intensities: tuple = (0.0,)
    sigma_rabi_per_sqrt: float = 4.0e4
    pi_rabi_per_sqrt: float = 1.0e5
    sigma_split: float = 0.5
    pi_split: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "cpt_intensities", tuple(float(i) for i in self.cpt_intensities))
        object.__setattr__(self, "repump_intensities", tuple(float(i) for i in self.repump_intensities))
        if any(i < 0 for i in self.cpt_intensities + self.repump_intensities):
            raise ValueError("intensities must be >= 0")
        if not (0 <= self.sigma_split <= 1 and 0 <= self.pi_split <= 1):
            raise ValueError("sideband splits must lie in [0, 1]")

    def sigma_rabi(self, intensity):
        c = self.sigma_rabi_per_sqrt
        return (c * math.sqrt(intensity * self.sigma_split),
                c * math.sqrt(intensity * (1 - self.sigma_split)))

    def pi_rabi(self, intensity):
        c = self.pi_rabi_per_sqrt
        return (c * math.sqrt(intensity * self.pi_split),
                c * math.sqrt(intensity * (1 - self.pi_split)))

    def apply(self, params, cpt, repump):
        sa, sb = self.sigma_rabi(cpt)
        pa, pb = self.pi_rabi(repump)
        return params.with_rabi(sigma_a=sa, sigma_b=sb, pi_a=pa, pi_b=pb)


def calibrated_params(**changes):
    """ModelParams at the calibrated effective operating point (fields off)."""
    return ModelParams(
        gamma_pop=TWO_PI * CALIBRATED["gamma_pop_hz"],
        gamma_coh=TWO_PI * CALIBRATED["gamma_coh_hz"],
        off_res_detuning=TWO_PI * CALIBRATED["off_res_detuning_hz"],
    ).replace(**changes)


def calibrated_intensity_map(cpt_intensities=MEASURED_CPT_INTENSITIES,
                             repump_intensities=MEASURED_REPUMP_INTENSITIES):
    return IntensityMap(
        cpt_intensities, repump_intensities,
        sigma_rabi_per_sqrt=CALIBRATED["sigma_rabi_per_sqrt"],
        pi_rabi_per_sqrt=CALIBRATED["pi_rabi_per_sqrt"],
    )


@dataclass(frozen=True)
class DeltaGrid:
    """Two-photon detuning grid: ``points`` samples over +-``span_fwhm`` widths.

    An explicit ``values`` array bypasses the adaptive span.
    """

    points: int = 201
    span_fwhm: float = 10.0
    values: tuple | None = None
    max_adapt: int = 4

    def around(self, fwhm):
        half = self.span_fwhm * fwhm
        return np.linspace(-half, half, self.points)


def expected_fwhm(params: ModelParams):
    """Rough CPT width (rad/s) used only to place the detuning grid."""
    drive = sum(m.rabi**2 for m in params.modes[:2]) / params.gamma_exc
    g = params.gamma_exc
    pi_scatter = sum(
        m.rabi**2 * g / (g**2 + 4 * params.off_res_detuning**2) for m in params.modes[2:]
    )
    return 2.0 * (params.gamma_coh + params.gamma_pop + drive + pi_scatter)


@dataclass
class CellResult:
    cpt_intensity: float
    repump_intensity: float
    contrast: float = float("nan")
    fwhm: float = float("nan")
    converged: bool = False
    background: float = float("nan")
    iterations: int = 0
    error: str = ""

    @property
    def ok(self):
        return self.converged and not self.error


def measure_resonance(params, geom, scale, grid: DeltaGrid, feedback=True):
    """Scan and fit one resonance, adapting the span to the fitted width."""
    if grid.values is not None:
        spectrum = scan_spectrum(params, geom, scale, np.asarray(grid.values), feedback)
        return spectrum, fit_voigt(spectrum)
    width = expected_fwhm(params)
    for _ in range(grid.max_adapt):
        deltas = grid.around(width)
        spectrum = scan_spectrum(params, geom, scale, deltas, feedback)
        fit = fit_voigt(spectrum)
        span = deltas[-1] - deltas[0]
        if fit.converged and span / (4 * grid.span_fwhm) < fit.fwhm < span / 3:
            break
        width = min(max(fit.fwhm, span / (8 * grid.span_fwhm)), span) if fit.converged else 3 * width
    return spectrum, fit


def _run_cell(args):
    params, geom, scale, grid, feedback, cpt, rp, imap = args
    cell = CellResult(cpt, rp)
    try:
        _, fit = measure_resonance(imap.apply(params, cpt, rp), geom, scale, grid, feedback)
    except (SolverError, FitError, ValueError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        return cell
    cell.contrast = fit.contrast
    cell.fwhm = fit.fwhm
    cell.converged = fit.converged
    cell.background = fit.params.background
    cell.iterations = fit.iterations
    return cell


@dataclass
class SweepResult:
    cpt_intensities: tuple
    repump_intensities: tuple
    cells: list
    metadata: dict = field(default_factory=dict)

    CSV_HEADER = "cpt_intensity_uW_cm2,repump_intensity_uW_cm2,contrast,fwhm_rad_s,converged"

    def cell(self, i, j):
        return self.cells[i * len(self.repump_intensities) + j]

    def grid(self, attr):
        out = np.array([getattr(c, attr) for c in self.cells], dtype=float)
        return out.reshape(len(self.cpt_intensities), len(self.repump_intensities))

    @property
    def contrast(self):
        return self.grid("contrast")

    @property
    def fwhm(self):
        return self.grid("fwhm")

    @property
    def success_fraction(self):
        return sum(c.ok for c in self.cells) / len(self.cells)

    def optimum(self, key="contrast"):
        """Best successful cell by contrast, or by contrast per unit FWHM."""
        ok = [c for c in self.cells if c.ok]
        if not ok:
            return None
        if key == "contrast":
            return max(ok, key=lambda c: c.contrast)
        return max(ok, key=lambda c: c.contrast / c.fwhm)

    def to_csv(self, comments=()):
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        for key, value in self.metadata.items():
            buf.write(f"# {key} = {value}\n")
        buf.write(self.CSV_HEADER + "\n")
        for c in self.cells:
            conv = "true" if c.ok else ("false" if not c.error else "failed:" + c.error.replace(",", ";"))
            nums = ",".join(repr(float(v)) for v in
                            (c.cpt_intensity, c.repump_intensity, c.contrast, c.fwhm))
            buf.write(f"{nums},{conv}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#") or line.startswith("cpt_intensity"):
                continue
            cpt, rp, con, fw, conv = line.split(",", 4)
            rows.append(CellResult(float(cpt), float(rp), float(con), float(fw),
                                   conv.strip() == "true"))
        cpts = tuple(dict.fromkeys(r.cpt_intensity for r in rows))
        rps = tuple(dict.fromkeys(r.repump_intensity for r in rows))
        return cls(cpts, rps, rows)


def run_repump_sweep(imap: IntensityMap, base: ModelParams, geom: CellGeometry, scale,
                     grid: DeltaGrid = DeltaGrid(), feedback=True, jobs=1):
    """Contrast and FWHM on the (CPT intensity, repump intensity) grid.

    Failed cells carry an error string instead of aborting the sweep.  With
    ``jobs > 1`` cells run in worker processes; placement is by grid index,
    so the result does not depend on ``jobs``.
    """
    tasks = [
        (base, geom, scale, grid, feedback, cpt, rp, imap)
        for cpt in imap.cpt_intensities
        for rp in imap.repump_intensities
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(t) for t in tasks]
    return SweepResult(imap.cpt_intensities, imap.repump_intensities, cells,
                       metadata={"kappa_per_m": scale.kappa})


def run_no_repump(imap, base, geom, scale, grid=DeltaGrid(), feedback=True, jobs=1):
    """The repump-off column of :func:`run_repump_sweep`."""
    return run_repump_sweep(replace(imap, repump_intensities=(0.0,)), base, geom, scale,
                            grid, feedback, jobs)


# --- calibration of the repump coupling -------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, lo, hi, tol=1e-4, max_iter=200):
    """Minimize a unimodal scalar function on [lo, hi]."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


@dataclass
class RepumpCalibration:
    pi_rabi_per_sqrt: float
    off_res_detuning: float
    residual: float
    converged: bool
    iterations: int
    degenerate: bool = False


def calibrate_repump_rabi(measured: SweepResult, base: ModelParams, geom, scale,
                          imap: IntensityMap, grid: DeltaGrid = DeltaGrid(),
                          max_outer=100, tol=1e-4, initial_width=math.log(4.0)):
    """Fit the pi-mode Rabi constant and the off-resonant pi detuning.

    Minimizes the summed squared contrast error by coordinate descent in
    log-parameters, each coordinate refined by a golden-section search whose
    bracket halves once the minimum stays inside it.
    """
    cpts = sorted(set(c.cpt_intensity for c in measured.cells))
    rps = sorted(set(c.repump_intensity for c in measured.cells))
    if len(cpts) < 2 or len(rps) < 4:
        raise ValueError("need >= 2 CPT intensities x >= 4 repump intensities")
    data = [(c.cpt_intensity, c.repump_intensity, c.contrast) for c in measured.cells
            if math.isfinite(c.contrast)]
    x = np.log([imap.pi_rabi_per_sqrt, base.off_res_detuning])
    values = np.array([d[2] for d in data])
    if np.ptp(values) <= 1e-12 * max(1.0, np.abs(values).max()):
        return RepumpCalibration(imap.pi_rabi_per_sqrt, base.off_res_detuning,
                                 float("nan"), False, 0, degenerate=True)

    seen = {}

    def residual(logs):
        key = (float(logs[0]), float(logs[1]))
        if key not in seen:
            seen[key] = _sum_squares(logs)
        return seen[key]

    def _sum_squares(logs):
        m = replace(imap, pi_rabi_per_sqrt=math.exp(logs[0]))
        p = base.replace(off_res_detuning=math.exp(logs[1]))
        total = 0.0
        for cpt, rp, target in data:
            cell = _run_cell((p, geom, scale, grid, True, cpt, rp, m))
            if not math.isfinite(cell.contrast):
                return float("inf")
            total += (cell.contrast - target) ** 2
        return total

    widths = np.full(2, initial_width)
    best = residual(x)
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        moved = 0.0
        for k in range(2):
            def along(v, k=k):
                trial = x.copy()
                trial[k] = v
                return residual(trial)
            v, fv = golden_section(along, x[k] - widths[k], x[k] + widths[k], tol=tol)
            if fv < best:
                moved = max(moved, abs(v - x[k]))
                if abs(v - x[k]) < 0.9 * widths[k]:
                    widths[k] *= 0.5
                x[k], best = v, fv
            else:
                widths[k] *= 0.5
        if moved < tol and widths.max() < 10 * tol:
            converged = True
            break
    return RepumpCalibration(math.exp(x[0]), math.exp(x[1]), best, converged, outer)


# --- full-overlap prediction -------------------------------------------------

@dataclass
class OverlapPrediction:
    contrast: float
    fwhm: float
    cpt_intensity: float
    repump_intensity: float
    no_repump_contrast: float
    improvement: float
    best_ratio_cell: CellResult
    sweep: SweepResult = field(repr=False)


def predict_full_overlap(base, geom, scale, imap, grid=DeltaGrid(), no_repump=None,
                         feedback=True, jobs=1):
    """Optimum contrast with the repump covering the whole optical path."""
    full = replace(geom, repump_start=0.0, repump_end=geom.length)
    sweep = run_repump_sweep(imap, base, full, scale, grid, feedback, jobs)
    best = sweep.optimum()
    if no_repump is None:
        no_repump = run_no_repump(imap, base, geom, scale, grid, feedback, jobs)
    ref = no_repump.optimum().contrast
    return OverlapPrediction(
        contrast=best.contrast,
        fwhm=best.fwhm,
        cpt_intensity=best.cpt_intensity,
        repump_intensity=best.repump_intensity,
        no_repump_contrast=ref,
        improvement=best.contrast / ref,
        best_ratio_cell=sweep.optimum("ratio"),
        sweep=sweep,
    )
