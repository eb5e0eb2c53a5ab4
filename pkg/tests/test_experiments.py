import math
from dataclasses import replace

import numpy as np
import pytest

from cptsim.experiments import (
    CALIBRATED,
    CellResult,
    DeltaGrid,
    IntensityMap,
    SweepResult,
    calibrate_repump_rabi,
    calibrated_intensity_map,
    calibrated_params,
    golden_section,
    predict_full_overlap,
    run_no_repump,
    run_repump_sweep,
)
from cptsim.model import TWO_PI, ModeId
from cptsim.spectroscopy import CellGeometry, calibrate_absorption_scale, small_signal_params

GEOM = CellGeometry(slices=6)
GRID = DeltaGrid(values=tuple(np.linspace(-TWO_PI * 60e3, TWO_PI * 60e3, 41)))


@pytest.fixture(scope="module")
def setup():
    p = calibrated_params()
    scale = calibrate_absorption_scale(small_signal_params(p), GEOM, 0.4)
    return p, scale


def test_intensity_map():
    m = IntensityMap((100.0, 400.0), (0.0, 9.0), sigma_rabi_per_sqrt=2.0, pi_rabi_per_sqrt=3.0)
    assert m.sigma_rabi(400.0) == pytest.approx((2 * math.sqrt(200), 2 * math.sqrt(200)))
    assert m.pi_rabi(0.0) == (0.0, 0.0)
    p = m.apply(calibrated_params(), 400.0, 9.0)
    assert p.rabi(ModeId.PI_A) == pytest.approx(3 * math.sqrt(4.5))
    # Rabi frequency is linear in field amplitude
    assert m.sigma_rabi(1600.0)[0] == pytest.approx(2 * m.sigma_rabi(400.0)[0])
    with pytest.raises(ValueError):
        IntensityMap((-1.0,))
    with pytest.raises(ValueError):
        IntensityMap((1.0,), sigma_split=1.5)


def test_golden_section():
    x, fx = golden_section(lambda v: (v - 0.3) ** 2 + 1, -2, 2, tol=1e-8)
    assert x == pytest.approx(0.3, abs=1e-7) and fx == pytest.approx(1.0)


def test_sweep_shape_and_zero_column(setup):
    p, scale = setup
    m = calibrated_intensity_map((1440.0, 8640.0), (0.0, 1000.0, 3000.0))
    sweep = run_repump_sweep(m, p, GEOM, scale, GRID)
    assert sweep.contrast.shape == (2, 3)
    assert sweep.success_fraction == 1.0
    nr = run_no_repump(m, p, GEOM, scale, GRID)
    assert np.array_equal(sweep.contrast[:, 0], nr.contrast[:, 0])
    assert np.array_equal(sweep.fwhm[:, 0], nr.fwhm[:, 0])


def test_single_cell_degenerates_to_one_row(setup):
    p, scale = setup
    sweep = run_repump_sweep(calibrated_intensity_map((5760.0,), (0.0,)), p, GEOM, scale, GRID)
    assert len(sweep.cells) == 1 and sweep.cells[0].ok


def test_jobs_do_not_change_results(setup):
    p, scale = setup
    m = calibrated_intensity_map((1440.0, 8640.0), (0.0, 3000.0))
    a = run_repump_sweep(m, p, GEOM, scale, GRID, jobs=1)
    b = run_repump_sweep(m, p, GEOM, scale, GRID, jobs=2)
    assert a.to_csv() == b.to_csv()


def test_sweep_csv_roundtrip():
    cells = [CellResult(1.0, 0.0, 0.05, 1e4, True), CellResult(1.0, 2.0, float("nan"), float("nan"),
                                                               False, error="FitError: x")]
    s = SweepResult((1.0,), (0.0, 2.0), cells)
    text = s.to_csv(["config_hash = abc"])
    assert text.splitlines()[1] == SweepResult.CSV_HEADER
    back = SweepResult.from_csv(text)
    assert back.cells[0].contrast == 0.05 and back.cells[0].converged
    assert not back.cells[1].converged
    assert "failed:FitError" in text


def test_failures_are_annotated(setup, monkeypatch):
    import cptsim.experiments as ex
    p, scale = setup

    def broken(*args, **kwargs):
        raise ex.SolverError("no steady state")

    monkeypatch.setattr(ex, "measure_resonance", broken)
    sweep = run_repump_sweep(calibrated_intensity_map((1440.0,), (0.0, 10.0)), p, GEOM, scale, GRID)
    assert sweep.success_fraction == 0.0
    assert all("SolverError" in c.error for c in sweep.cells)


def test_prediction_without_repump_equals_no_repump_optimum(setup):
    p, scale = setup
    m = replace(calibrated_intensity_map((1440.0, 8640.0, 12960.0), (0.0, 1000.0)),
                pi_rabi_per_sqrt=0.0)
    pred = predict_full_overlap(p, GEOM, scale, m, GRID)
    assert pred.contrast == pred.no_repump_contrast
    assert pred.improvement == 1.0


def test_third_overlap_not_above_full(setup):
    p, scale = setup
    m = calibrated_intensity_map((4320.0, 12960.0), (300.0, 3000.0))
    third = run_repump_sweep(m, p, GEOM, scale, GRID)
    full = run_repump_sweep(m, p, replace(GEOM, repump_start=0.0, repump_end=GEOM.length), scale, GRID)
    assert np.all(third.contrast <= full.contrast + 1e-12)


def test_calibrate_degenerate_dataset(setup):
    p, scale = setup
    cells = [CellResult(c, r, 0.05, 1e4, True) for c in (1440.0, 8640.0)
             for r in (0.0, 100.0, 1000.0, 3000.0)]
    m = calibrated_intensity_map()
    cal = calibrate_repump_rabi(SweepResult((1440.0, 8640.0), (0.0, 100.0, 1000.0, 3000.0), cells),
                                p, GEOM, scale, m, GRID)
    assert cal.degenerate
    assert cal.pi_rabi_per_sqrt == m.pi_rabi_per_sqrt
    assert cal.off_res_detuning == p.off_res_detuning


def test_calibrate_needs_enough_data(setup):
    p, scale = setup
    cells = [CellResult(1440.0, r, 0.05, 1e4, True) for r in (0.0, 1.0, 2.0, 3.0)]
    with pytest.raises(ValueError):
        calibrate_repump_rabi(SweepResult((1440.0,), (0.0, 1.0, 2.0, 3.0), cells), p, GEOM,
                              scale, calibrated_intensity_map(), GRID)


def test_calibrate_recovers_synthetic_truth(setup):
    p, scale = setup
    truth_map = calibrated_intensity_map((4320.0, 12960.0), (0.0, 1000.0, 3000.0, 10000.0))
    truth = run_repump_sweep(truth_map, p, GEOM, scale, GRID)
    start_map = replace(truth_map, pi_rabi_per_sqrt=truth_map.pi_rabi_per_sqrt * 1.3)
    start = p.replace(off_res_detuning=p.off_res_detuning * 0.8)
    # bracket of +-ln 1.6 covers both starting offsets
    cal = calibrate_repump_rabi(truth, start, GEOM, scale, start_map, GRID,
                                tol=1e-3, initial_width=math.log(1.6))
    assert cal.converged
    assert cal.pi_rabi_per_sqrt == pytest.approx(truth_map.pi_rabi_per_sqrt, rel=0.02)
    assert cal.off_res_detuning == pytest.approx(p.off_res_detuning, rel=0.02)
    assert cal.residual < 1e-8


def test_calibrated_constants_are_consistent():
    p = calibrated_params()
    assert p.gamma_pop == pytest.approx(TWO_PI * CALIBRATED["gamma_pop_hz"])
    m = calibrated_intensity_map()
    assert m.pi_rabi_per_sqrt == CALIBRATED["pi_rabi_per_sqrt"]
