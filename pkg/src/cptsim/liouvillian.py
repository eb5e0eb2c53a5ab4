"""Lindblad superoperators and steady states.

Vectorization convention: ``vec(rho) = rho.reshape(-1)`` (row-major, numpy's
default ravel).  Under it ``vec(A @ rho @ B) = kron(A, B.T) @ vec(rho)``, so
the coherent part of the generator is ``-1j * (kron(H, I) - kron(I, H.T))``.
Every routine here works for any Hilbert-space dimension ``d``; the
seven-level model is just the common case.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import EXCITED, GROUND, LevelIndex, ModelParams

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
EIGENVALUE_TOL = -1e-9
# second-smallest singular value of the generator, relative to its largest,
# below which the steady state is not unique
RANK_TOL = 1e-13


class SolverError(RuntimeError):
    pass


class SingularSystem(SolverError):
    pass


class NonPhysicalState(SolverError):
    pass


class StepTooLarge(SolverError):
    pass


class ChannelKind(enum.Enum):
    DECAY = "decay"
    DEPHASE = "dephase"
    GROUND_MIX = "ground_mix"


@dataclass(frozen=True)
class LindbladChannel:
    kind: ChannelKind
    source: int
    target: int
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"channel rate must be >= 0, got {self.rate}")
        if self.kind is ChannelKind.DEPHASE and self.source != self.target:
            raise ValueError("dephasing acts on a single level")

    def jump_operator(self, dim):
        c = np.zeros((dim, dim), dtype=complex)
        c[self.target, self.source] = 1.0
        return c

    @classmethod
    def decay(cls, source, target, rate):
        return cls(ChannelKind.DECAY, int(source), int(target), float(rate))

    @classmethod
    def dephase(cls, level, rate):
        return cls(ChannelKind.DEPHASE, int(level), int(level), float(rate))

    @classmethod
    def ground_mix(cls, source, target, rate):
        return cls(ChannelKind.GROUND_MIX, int(source), int(target), float(rate))


def validate_seven_level_channel(ch):
    excited, ground = set(EXCITED), set(GROUND)
    if ch.kind is ChannelKind.DECAY and not (ch.source in excited and ch.target in ground):
        raise ValueError(f"decay must run excited -> ground: {ch}")
    if ch.kind is ChannelKind.GROUND_MIX and not (ch.source in ground and ch.target in ground):
        raise ValueError(f"ground mixing must stay in the ground manifold: {ch}")


def assemble_channels(params: ModelParams):
    """Spontaneous decay, ground relaxation toward thermal weights, and
    clock-coherence dephasing.

    Projector dephasing on Clock1 and Clock2, each at ``gamma_coh``, damps
    rho_12 at exactly ``gamma_coh`` on top of the relaxation contribution.
    """
    channels = []
    for i, e in enumerate(EXCITED):
        for j, g in enumerate(GROUND):
            b = params.branching[i, j]
            if b > 0:
                channels.append(LindbladChannel.decay(e, g, params.gamma_exc * b))
    for g in GROUND:
        for g2, w in zip(GROUND, params.thermal_weights):
            if g2 != g and w > 0:
                channels.append(LindbladChannel.ground_mix(g, g2, params.gamma_pop * w))
    if params.gamma_coh > 0:
        for level in (LevelIndex.CLOCK1, LevelIndex.CLOCK2):
            channels.append(LindbladChannel.dephase(level, params.gamma_coh))
    for ch in channels:
        validate_seven_level_channel(ch)
    return channels


def commutator_superop(h):
    """-i[H, .] as a superoperator; accepts a stack of Hamiltonians."""
    h = np.asarray(h, dtype=complex)
    d = h.shape[-1]
    eye = np.eye(d)
    left = np.einsum("...ij,kl->...ikjl", h, eye)
    right = np.einsum("ij,...kl->...ikjl", eye, np.swapaxes(h, -1, -2))
    return (-1j * (left - right)).reshape(h.shape[:-2] + (d * d, d * d))


def dissipator_superop(channels, dim):
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    eye = np.eye(dim)
    for ch in channels:
        if ch.rate == 0:
            continue
        c = ch.jump_operator(dim)
        cdc = c.conj().T @ c
        out += ch.rate * (
            np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
        )
    return out


def build_liouvillian(h, channels):
    h = np.asarray(h, dtype=complex)
    return commutator_superop(h) + dissipator_superop(channels, h.shape[-1])


def vec(rho):
    return np.asarray(rho).reshape(-1)


def unvec(v):
    v = np.asarray(v)
    d = int(round(np.sqrt(v.shape[-1])))
    return v.reshape(v.shape[:-1] + (d, d))


def trace_row(dim):
    return np.eye(dim).reshape(-1)


def hermitize(rho):
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


@dataclass(frozen=True)
class StateDiagnostics:
    trace_error: float
    hermiticity_error: float
    min_eigenvalue: float

    @property
    def trace_ok(self):
        return self.trace_error <= TRACE_TOL

    @property
    def hermitian_ok(self):
        return self.hermiticity_error <= HERMITICITY_TOL

    @property
    def positive_ok(self):
        return self.min_eigenvalue >= EIGENVALUE_TOL

    @property
    def ok(self):
        return self.trace_ok and self.hermitian_ok and self.positive_ok


def validate_state(rho):
    rho = np.asarray(rho)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    return StateDiagnostics(
        trace_error=float(abs(np.trace(rho) - 1.0)),
        hermiticity_error=herm,
        min_eigenvalue=float(np.linalg.eigvalsh(hermitize(rho)).min()),
    )


def _replaced_system(L):
    L = np.array(L, dtype=complex, copy=True)
    dim = int(round(np.sqrt(L.shape[-1])))
    L[..., 0, :] = trace_row(dim)
    rhs = np.zeros(L.shape[:-1], dtype=complex)
    rhs[..., 0] = 1.0
    return L, rhs


def check_unique(L):
    """Raise SingularSystem when the null space of L is not one-dimensional."""
    s = np.linalg.svd(L, compute_uv=False)
    if s[..., 0].max() == 0 or np.any(s[..., -2] <= RANK_TOL * s[..., 0]):
        raise SingularSystem(
            "generator has more than one stationary state "
            f"(second-smallest singular value {np.min(s[..., -2]):.3g})"
        )


def steady_state_batch(L, check=True):
    """Steady states for a stack of generators, shape (n, d*d, d*d).

    Replaces the first equation by the trace condition and solves by dense
    LU. With ``check`` each result is validated; uniqueness is inferred from
    the solve succeeding and the fixed-point residual staying small.
    """
    L = np.asarray(L, dtype=complex)
    A, b = _replaced_system(L)
    try:
        x = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    rho = hermitize(unvec(x))
    if check:
        scale = 1.0 + np.abs(L).max(axis=(-2, -1))
        resid = np.abs(np.einsum("...ij,...j->...i", L, vec_stack(rho))).max(axis=-1)
        bad = resid > 1e-10 * scale
        if np.any(bad):
            raise SingularSystem(
                f"fixed-point residual {resid.max():.3g} exceeds tolerance; "
                "stationary state is ill-defined"
            )
        _check_physical(rho)
    return rho


def vec_stack(rho):
    return rho.reshape(rho.shape[:-2] + (-1,))


def _check_physical(rho):
    tr = np.abs(np.einsum("...ii->...", rho) - 1.0)
    eig = np.linalg.eigvalsh(rho).min(axis=-1)
    if np.any(tr > TRACE_TOL) or np.any(eig < EIGENVALUE_TOL):
        raise NonPhysicalState(
            f"steady state failed validation: trace error {tr.max():.3g}, "
            f"min eigenvalue {eig.min():.3g}"
        )


def steady_state(L, check_rank=True):
    """Unique stationary state of a trace-preserving generator."""
    L = np.asarray(L, dtype=complex)
    if check_rank:
        check_unique(L)
    return steady_state_batch(L[None], check=True)[0]


def rk4_propagator(L, dt):
    """One classical RK4 step for a linear system, as a matrix."""
    L = np.asarray(L)
    a = dt * L
    eye = np.eye(L.shape[0], dtype=L.dtype)
    a2 = a @ a
    return eye + a + a2 / 2 + a2 @ a / 6 + a2 @ a2 / 24


def _matrix_power_apply(P, n, v):
    """P**n @ v by binary exponentiation."""
    while n:
        if n & 1:
            v = P @ v
        n >>= 1
        if n:
            P = P @ P
    return v


def evolve(rho0, L, t, dt):
    """Fixed-step RK4 integration of d vec(rho)/dt = L vec(rho).

    Because the generator is constant, ``n`` RK4 steps equal the n-th power
    of the one-step matrix; it is applied by repeated squaring so that stiff
    clock-cell generators (optical rates ~1e9/s, ground rates ~1e2/s) can
    be integrated to many ground-state lifetimes.  The powers are formed in
    extended precision (``clongdouble``); in float64 the ~30 squarings lose
    about 1e-8 absolute accuracy.  Stability needs every
    ``dt * lambda`` inside the RK4 region (|dt * lambda| < 2.78 on the real
    and imaginary axes); :func:`stable_step` picks such a ``dt``.  The last
    partial step lands exactly on ``t``.
    """
    if dt <= 0 or t < 0:
        raise ValueError("need dt > 0 and t >= 0")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    L = np.asarray(L, dtype=np.clongdouble)
    n_full = int(np.floor(t / dt * (1 + 1e-12)))
    v = vec(rho0).astype(np.clongdouble)
    v = _matrix_power_apply(rk4_propagator(L, np.longdouble(dt)), n_full, v)
    rest = t - n_full * dt
    if rest > 1e-12 * dt:
        v = rk4_propagator(L, np.longdouble(rest)) @ v
    rho = hermitize(unvec(v.astype(complex)))
    tr0 = np.trace(rho0)
    if not np.all(np.isfinite(rho)) or abs(np.trace(rho) - tr0) > 1e-6:
        raise StepTooLarge(f"trace drifted to {np.trace(rho)} with dt={dt:g}")
    return rho


def stable_step(L, safety=0.5):
    """A step size with every eigenvalue of dt*L well inside the RK4 region."""
    radius = np.abs(np.linalg.eigvals(np.asarray(L, dtype=complex))).max()
    return safety * 2.5 / radius if radius > 0 else 1.0
