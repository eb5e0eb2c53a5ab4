import numpy as np
import pytest

from cptsim.liouvillian import (
    ChannelKind,
    LindbladChannel,
    NonPhysicalState,
    SingularSystem,
    StepTooLarge,
    assemble_channels,
    build_liouvillian,
    check_unique,
    commutator_superop,
    dissipator_superop,
    evolve,
    stable_step,
    steady_state,
    steady_state_batch,
    trace_row,
    unvec,
    validate_state,
    vec,
)
from cptsim.model import EXCITED, GROUND, LevelIndex, ModelParams, build_hamiltonian

from regime import random_params


def _liouvillian(p):
    return build_liouvillian(build_hamiltonian(p), assemble_channels(p))


def _random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a + a.conj().T


def test_vectorization_convention():
    rng = np.random.default_rng(0)
    a, b, r = (rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)) for _ in range(3))
    assert np.allclose(np.kron(a, b.T) @ vec(r), vec(a @ r @ b))
    assert np.array_equal(unvec(vec(r)), r)


def test_commutator_matches_direct_product():
    rng = np.random.default_rng(1)
    h, rho = _random_hermitian(rng, 5), _random_hermitian(rng, 5)
    direct = -1j * (h @ rho - rho @ h)
    assert np.allclose(unvec(commutator_superop(h) @ vec(rho)), direct)


def test_dissipator_matches_lindblad_form():
    rng = np.random.default_rng(2)
    rho = _random_hermitian(rng, 4)
    ch = LindbladChannel.decay(2, 0, 3.0)
    c = ch.jump_operator(4)
    direct = 3.0 * (c @ rho @ c.conj().T - 0.5 * (c.conj().T @ c @ rho + rho @ c.conj().T @ c))
    assert np.allclose(unvec(dissipator_superop([ch], 4) @ vec(rho)), direct)


def test_channels_for_default_params():
    p = ModelParams()
    chans = assemble_channels(p)
    decay = [c for c in chans if c.kind is ChannelKind.DECAY]
    assert all(c.source in EXCITED and c.target in GROUND for c in decay)
    # forbidden channels omitted
    assert not any(c.source == LevelIndex.OFF_RES1 and c.target == LevelIndex.CLOCK1 for c in decay)
    assert not any(c.source == LevelIndex.OFF_RES2 and c.target == LevelIndex.CLOCK2 for c in decay)
    for e in EXCITED:
        out = sum(c.rate for c in decay if c.source == e)
        assert out == pytest.approx(p.gamma_exc, rel=1e-12)
    mix = [c for c in chans if c.kind is ChannelKind.GROUND_MIX]
    assert len(mix) == 6
    assert all(c.source != c.target for c in mix)


def test_channel_validation():
    with pytest.raises(ValueError):
        LindbladChannel.decay(2, 0, -1.0)
    with pytest.raises(ValueError):
        LindbladChannel(ChannelKind.DEPHASE, 0, 1, 1.0)


def test_coherence_damping_rates():
    """Free ground coherences decay at the rates implied by the channel set."""
    p = ModelParams()
    L = dissipator_superop(assemble_channels(p), 7)
    d = 7
    idx = LevelIndex.CLOCK1 * d + LevelIndex.CLOCK2
    w = p.thermal_weights
    g1, g2 = p.gamma_pop, p.gamma_coh
    # each clock level leaves at gamma_pop * (1 - own weight); rho_12 damps at the mean plus gamma_coh
    expected = -(0.5 * g1 * (1 - w[0]) + 0.5 * g1 * (1 - w[1]) + g2)
    assert L[idx, idx].real == pytest.approx(expected, rel=1e-12)


def test_superoperator_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(3)
    for _ in range(20):
        L = _liouvillian(random_params(rng))
        scale = np.abs(L).max()
        assert np.abs(trace_row(7) @ L).max() <= 1e-10 * scale
        rho = _random_hermitian(rng, 7)
        out = unvec(L @ vec(rho))
        assert np.abs(out - out.conj().T).max() <= 1e-10 * scale * np.abs(rho).max()


def test_thermal_fixed_point():
    rho = steady_state(_liouvillian(ModelParams()))
    pops = [rho[g, g].real for g in GROUND]
    assert pops == pytest.approx([1 / 8, 1 / 8, 6 / 8], abs=1e-10)


def test_two_level_decay_oracle():
    """Excited population of a driven-free two-level atom decays as exp(-G t)."""
    G = 2e6
    L = build_liouvillian(np.zeros((2, 2)), [LindbladChannel.decay(1, 0, G)])
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    for t in (1e-7, 5e-7, 2e-6):
        rho = evolve(rho0, L, t, dt=1e-9)
        assert rho[1, 1].real == pytest.approx(np.exp(-G * t), abs=1e-10)


def test_two_level_rabi_oracle():
    """Undamped resonant drive: P_e = sin^2(W t / 2)."""
    W = 1e6
    L = build_liouvillian(np.array([[0, W / 2], [W / 2, 0]]), [])
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    for t in (1e-6, 3.3e-6):
        rho = evolve(rho0, L, t, dt=1e-8)
        assert rho[1, 1].real == pytest.approx(np.sin(W * t / 2) ** 2, abs=1e-9)


def test_degenerate_generator_rejected():
    # two uncoupled, undamped levels: any diagonal state is stationary
    L = build_liouvillian(np.diag([0.0, 1.0]), [])
    with pytest.raises(SingularSystem):
        steady_state(L)


def test_nonphysical_detected():
    # a trace-preserving but sign-flipping "generator" has a non-positive fixed point
    bad = np.zeros((4, 4), dtype=complex)
    bad[0, 0], bad[0, 3] = -1.0, 2.0
    bad[3, 0], bad[3, 3] = 1.0, -2.0
    with pytest.raises((NonPhysicalState, SingularSystem)):
        steady_state(bad, check_rank=False)


def test_batch_matches_single():
    rng = np.random.default_rng(4)
    Ls = np.array([_liouvillian(random_params(rng)) for _ in range(5)])
    batch = steady_state_batch(Ls)
    for L, rho in zip(Ls, batch):
        assert np.allclose(steady_state(L), rho, atol=1e-13)


def test_validate_state():
    diag = validate_state(np.diag([0.5, 0.5]).astype(complex))
    assert diag.ok
    diag = validate_state(np.diag([1.2, -0.2]).astype(complex))
    assert not diag.positive_ok


def test_step_too_large():
    L = build_liouvillian(np.zeros((2, 2)), [LindbladChannel.decay(1, 0, 1e9)])
    with pytest.raises(StepTooLarge):
        evolve(np.diag([0.0, 1.0]).astype(complex), L, 1e-6, dt=1e-8)


def test_steady_state_is_evolution_limit():
    rng = np.random.default_rng(5)
    p = random_params(rng)
    L = _liouvillian(p)
    ev = np.linalg.eigvals(L)
    gap = np.sort(np.abs(ev.real))[1]
    rho = evolve(np.eye(7, dtype=complex) / 7, L, 40.0 / gap, stable_step(L))
    assert np.abs(rho - steady_state(L)).max() <= 1e-8


def test_check_unique_accepts_physical_generator():
    check_unique(_liouvillian(ModelParams().with_rabi(sigma_a=1e6, sigma_b=1e6)))
