import numpy as np
import pytest

from cptsim.liouvillian import (
    LindbladChannel,
    assemble_channels,
    build_liouvillian,
    steady_state,
)
from cptsim.model import TWO_PI, LevelIndex, ModeId, ModelParams, build_hamiltonian
from cptsim.spectroscopy import (
    AbsorptionScale,
    CellGeometry,
    PropagationError,
    Spectrum,
    absorption_coefficients,
    calibrate_absorption_scale,
    delta_from_modulation,
    propagate_cell,
    propagate_many,
    scan_spectrum,
    small_signal_params,
)

L3 = (LevelIndex.CLOCK1, LevelIndex.CLOCK2, LevelIndex.CPT_EXCITED)


def lambda_state(rabi, delta, gamma, g2=0.0):
    """Three-level Lambda steady state embedded into the 7x7 frame."""
    # local order: 0 = Clock1, 1 = Clock2, 2 = excited
    h = np.zeros((3, 3), dtype=complex)
    h[0, 0] = delta
    h[0, 2] = h[2, 0] = rabi / 2
    h[1, 2] = h[2, 1] = rabi / 2
    chans = [LindbladChannel.decay(2, 0, gamma / 2), LindbladChannel.decay(2, 1, gamma / 2)]
    if g2:
        chans += [LindbladChannel.dephase(0, g2), LindbladChannel.dephase(1, g2)]
    rho3 = steady_state(build_liouvillian(h, chans))
    rho = np.zeros((7, 7), dtype=complex)
    for a, i in enumerate(L3):
        for b, j in enumerate(L3):
            rho[i, j] = rho3[a, b]
    return rho


def test_dark_state_is_transparent():
    gamma = ModelParams().gamma_exc
    for rabi in (1e5, 1e6, 1e7):
        p = ModelParams().with_rabi(sigma_a=rabi, sigma_b=rabi)
        scale = AbsorptionScale(3.7)
        rho = lambda_state(rabi, 0.0, gamma)
        # the dark state (|1> - |2>)/sqrt(2) carries all population
        assert rho[LevelIndex.CPT_EXCITED, LevelIndex.CPT_EXCITED].real < 1e-12
        for a in absorption_coefficients(rho, p, scale).values():
            assert abs(a) <= 1e-10 * scale.kappa * gamma / rabi


def test_lambda_absorbs_off_resonance():
    gamma = ModelParams().gamma_exc
    rabi = 1e6
    p = ModelParams().with_rabi(sigma_a=rabi, sigma_b=rabi)
    rho = lambda_state(rabi, 2e5, gamma, g2=1e3)
    assert all(a > 0 for a in absorption_coefficients(rho, p, AbsorptionScale(1.0)).values())


def test_two_level_saturation():
    """alpha / alpha_0 = 1 / (1 + s) with s = 2 W^2 / G^2 for a closed two-level atom."""
    G, kappa = 1.15e9, 2.0
    p7 = ModelParams(gamma_exc=G)
    for s in np.logspace(-2, 2, 15):
        W = G * np.sqrt(s / 2)
        h = np.array([[0, W / 2], [W / 2, 0]])
        rho2 = steady_state(build_liouvillian(h, [LindbladChannel.decay(1, 0, G)]))
        alpha = kappa * G * 2 * rho2[0, 1].imag / W
        assert alpha / (2 * kappa) == pytest.approx(1 / (1 + s), rel=1e-8)
        # same coherence through the package's absorption routine
        rho = np.zeros((7, 7), dtype=complex)
        g, e = LevelIndex.CLOCK2, LevelIndex.CPT_EXCITED
        rho[g, g], rho[g, e], rho[e, g], rho[e, e] = rho2[0, 0], rho2[0, 1], rho2[1, 0], rho2[1, 1]
        got = absorption_coefficients(rho, p7.with_rabi(sigma_a=W, sigma_b=W), AbsorptionScale(kappa))
        assert got[ModeId.SIGMA_A] == pytest.approx(alpha, rel=1e-12)


def test_inert_mode_has_zero_alpha():
    p = ModelParams().with_rabi(sigma_a=1e6, sigma_b=0.0)
    rho = steady_state(build_liouvillian(build_hamiltonian(p), assemble_channels(p)))
    alpha = absorption_coefficients(rho, p, AbsorptionScale(1.0))
    assert alpha[ModeId.SIGMA_B] == 0.0 and alpha[ModeId.SIGMA_A] > 0


def _base():
    return ModelParams(gamma_pop=TWO_PI * 400, gamma_coh=TWO_PI * 3000,
                       off_res_detuning=TWO_PI * 20e6).with_rabi(
        sigma_a=2e6, sigma_b=1.5e6, pi_a=3e6, pi_b=3e6)


def test_zero_kappa_is_transparent():
    T, _ = propagate_cell(_base(), CellGeometry(slices=12), AbsorptionScale(0.0))
    assert T == 1.0


def _alpha_direct(p):
    rho = steady_state(build_liouvillian(build_hamiltonian(p), assemble_channels(p)))
    a = absorption_coefficients(rho, p, AbsorptionScale(1.0))
    return np.array([a[ModeId.SIGMA_A], a[ModeId.SIGMA_B]])


def test_beer_lambert_without_feedback():
    p = _base().with_rabi(pi_a=0.0, pi_b=0.0).replace(delta=5e4)
    geom = CellGeometry(slices=48)
    kappa = 40.0
    T, rec = propagate_cell(p, geom, AbsorptionScale(kappa), feedback=False)
    alpha = kappa * _alpha_direct(p)
    w = np.array([2e6, 1.5e6]) ** 2
    expected = (w * np.exp(-alpha * geom.length)).sum() / w.sum()
    assert T == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_segment_product_without_feedback():
    p = _base().replace(delta=3e4)
    geom = CellGeometry(slices=48)
    kappa = 40.0
    T, _ = propagate_cell(p, geom, AbsorptionScale(kappa), feedback=False)
    dark = kappa * _alpha_direct(p.with_rabi(pi_a=0.0, pi_b=0.0))
    pumped = kappa * _alpha_direct(p)
    seg = [(dark, 0.006), (pumped, 0.006), (dark, 0.006)]
    per_mode = np.prod([np.exp(-a * l) for a, l in seg], axis=0)
    w = np.array([2e6, 1.5e6]) ** 2
    assert T == pytest.approx((w * per_mode).sum() / w.sum(), rel=1e-12, abs=1e-12)


def test_halving_length_squares_root():
    p = _base().with_rabi(pi_a=0.0, pi_b=0.0).with_rabi(sigma_b=2e6)
    sc = AbsorptionScale(50.0)
    T_full, _ = propagate_cell(p, CellGeometry(slices=48), sc, feedback=False)
    T_half, _ = propagate_cell(p, CellGeometry(length=0.009, repump_start=0.003,
                                               repump_end=0.006, slices=24), sc, feedback=False)
    assert T_half**2 == pytest.approx(T_full, rel=1e-9)


def test_repump_window_irrelevant_without_pi():
    p = _base().with_rabi(pi_a=0.0, pi_b=0.0)
    sc = AbsorptionScale(60.0)
    a = propagate_many(p, [0.0, 1e4], CellGeometry(slices=24), sc)
    b = propagate_many(p, [0.0, 1e4], CellGeometry(repump_start=0.0, repump_end=0.018,
                                                   slices=24), sc)
    assert np.array_equal(a.transmission, b.transmission)


def test_transmission_monotone_in_kappa():
    p = _base()
    ts = [propagate_cell(p, CellGeometry(slices=12), AbsorptionScale(k))[0]
          for k in (0.0, 10.0, 30.0, 100.0)]
    assert all(0 < t <= 1 for t in ts)
    assert all(b < a for a, b in zip(ts, ts[1:]))


def test_calibration_hits_target():
    p = small_signal_params(_base())
    geom = CellGeometry(slices=24)
    sc = calibrate_absorption_scale(p, geom, 0.4)
    assert sc.kappa > 0
    assert propagate_cell(p, geom, sc)[0] == pytest.approx(0.4, abs=1e-6)
    assert calibrate_absorption_scale(p, geom, 1.0).kappa == 0.0
    with pytest.raises(ValueError):
        calibrate_absorption_scale(p, geom, 1.5)


def test_symmetric_lambda_spectrum():
    """Equal drives and 1<->2 symmetric decay: T(delta) = T(-delta)."""
    b = ModelParams().branching
    assert b[0, 0] == pytest.approx(b[0, 1])
    p = ModelParams(gamma_pop=TWO_PI * 300).with_rabi(sigma_a=1.5e6, sigma_b=1.5e6)
    grid = np.linspace(-2e5, 2e5, 41)
    spec = scan_spectrum(p, CellGeometry(slices=12), AbsorptionScale(60.0), grid)
    assert np.abs(spec.transmission - spec.transmission[::-1]).max() <= 1e-9


def test_cpt_peak_above_background():
    p = _base().with_rabi(pi_a=0.0, pi_b=0.0)
    spec = scan_spectrum(p, CellGeometry(slices=12), AbsorptionScale(60.0),
                         np.linspace(-5e5, 5e5, 51))
    assert spec.transmission[25] > spec.transmission[0]


def test_slice_convergence():
    p = _base()
    sc = calibrate_absorption_scale(small_signal_params(p), CellGeometry(), 0.4)
    t48 = propagate_many(p, [0.0, 2e5], CellGeometry(slices=48), sc).transmission
    t96 = propagate_many(p, [0.0, 2e5], CellGeometry(slices=96), sc).transmission
    assert np.abs(t96 / t48 - 1).max() < 1e-4


def test_scan_validates_grid():
    p = _base()
    with pytest.raises(ValueError):
        scan_spectrum(p, CellGeometry(slices=6), AbsorptionScale(1.0), [])
    with pytest.raises(ValueError):
        scan_spectrum(p, CellGeometry(slices=6), AbsorptionScale(1.0), [0.0, 0.0])


def test_solver_error_names_delta(monkeypatch):
    import cptsim.spectroscopy as sp
    real = sp.steady_state_batch
    idx = LevelIndex.CLOCK1 * 7 + LevelIndex.CLOCK2

    def fails_at_2e5(L, check=True):
        # the rho_12 diagonal entry of the generator carries -i * delta
        if np.any(np.abs(L[:, idx, idx].imag + 2e5) < 1.0):
            raise sp.SolverError("boom")
        return real(L, check)

    monkeypatch.setattr(sp, "steady_state_batch", fails_at_2e5)
    with pytest.raises(PropagationError) as info:
        scan_spectrum(_base(), CellGeometry(slices=6), AbsorptionScale(1.0), [0.0, 2e5, 3e5])
    assert info.value.delta == 2e5
    assert "delta=200000" in str(info.value)


def test_spectrum_csv_roundtrip():
    s = Spectrum(np.array([-1.0, 0.0, 1.5]), np.array([0.3, 0.5, 0.3]), metadata={"a": 1})
    back = Spectrum.from_csv(s.to_csv())
    assert np.array_equal(back.deltas, s.deltas) and np.array_equal(back.transmission, s.transmission)
    assert back.metadata == {"a": "1"}


def test_modulation_mapping():
    assert delta_from_modulation(6.834682610904e9 / 2) == pytest.approx(0.0, abs=1e-3)
    assert delta_from_modulation(6.834682610904e9 / 2 + 50.0) == pytest.approx(TWO_PI * 100.0)
