"""Absorption, propagation through the segmented cell, and spectra."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .liouvillian import (
    SolverError,
    assemble_channels,
    commutator_superop,
    dissipator_superop,
    steady_state_batch,
)
from .model import (
    GROUND_HFS_HZ,
    MODE_EDGES,
    N_LEVELS,
    PI_MODES,
    SIGMA_MODES,
    TWO_PI,
    LevelIndex,
    ModelParams,
    ModeId,
    build_hamiltonian,
)

INERT_RABI_FRACTION = 1e-6


class PropagationError(SolverError):
    def __init__(self, message, slice_index=None, delta=None):
        super().__init__(message)
        self.slice_index = slice_index
        self.delta = delta


@dataclass(frozen=True)
class CellGeometry:
    length: float = 0.018
    repump_start: float = 0.006
    repump_end: float = 0.012
    slices: int = 48

    def __post_init__(self):
        if not 0 <= self.repump_start <= self.repump_end <= self.length:
            raise ValueError("need 0 <= repump_start <= repump_end <= length")
        if self.slices < 3:
            raise ValueError("need at least 3 slices")

    @property
    def dz(self):
        return self.length / self.slices

    def repumped(self):
        """Boolean mask: slice midpoint lies in [repump_start, repump_end)."""
        mid = (np.arange(self.slices) + 0.5) * self.dz
        return (mid >= self.repump_start) & (mid < self.repump_end)


@dataclass(frozen=True)
class AbsorptionScale:
    kappa: float
    target_transparency: float | None = None
    density: float | None = None

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("kappa must be >= 0")


def absorption_coefficients(rho, params: ModelParams, scale: AbsorptionScale):
    """Per sigma mode absorption coefficient (1/m), keyed by ModeId.

    alpha = kappa * Gamma' * 2 Im(rho[g, e]) / Omega, the linear-response
    ratio of induced coherence to drive.  Modes below 1e-6 Gamma' are inert.
    """
    rho = np.asarray(rho)
    out = {}
    for mode in SIGMA_MODES:
        g, e = MODE_EDGES[mode][0]
        rabi = params.rabi(mode)
        if rabi < INERT_RABI_FRACTION * params.gamma_exc:
            out[mode] = 0.0
        else:
            out[mode] = scale.kappa * params.gamma_exc * 2.0 * rho[..., g, e].imag / rabi
    return out


class _GeneratorFactory:
    """Assembles Liouvillians for many (delta, Omega_A, Omega_B) at once.

    The generator is affine in delta and in both sigma Rabi frequencies, so
    a stack is a fixed base plus three scaled superoperators.
    """

    def __init__(self, params):
        self.params = params
        frozen = params.with_rabi(sigma_a=0.0, sigma_b=0.0).replace(delta=0.0)
        diss = dissipator_superop(assemble_channels(params), N_LEVELS)
        self.base_pumped = diss + commutator_superop(build_hamiltonian(frozen))
        self.base_dark = diss + commutator_superop(
            build_hamiltonian(frozen.with_rabi(pi_a=0.0, pi_b=0.0))
        )
        self.gen = {}
        for key, edge in (
            ("a", MODE_EDGES[ModeId.SIGMA_A][0]),
            ("b", MODE_EDGES[ModeId.SIGMA_B][0]),
        ):
            h = np.zeros((N_LEVELS, N_LEVELS))
            g, e = edge
            h[g, e] = h[e, g] = 0.5
            self.gen[key] = commutator_superop(h)
        h = np.zeros((N_LEVELS, N_LEVELS))
        h[LevelIndex.CLOCK1, LevelIndex.CLOCK1] = 1.0
        h[LevelIndex.OFF_RES2, LevelIndex.OFF_RES2] = 1.0
        self.gen["delta"] = commutator_superop(h)

    def __call__(self, deltas, rabi_a, rabi_b, pumped):
        base = self.base_pumped if pumped else self.base_dark
        return (
            base
            + np.multiply.outer(deltas, self.gen["delta"])
            + np.multiply.outer(rabi_a, self.gen["a"])
            + np.multiply.outer(rabi_b, self.gen["b"])
        )


@dataclass
class PropagationRecord:
    transmission: np.ndarray
    alpha_entry: dict
    alpha: np.ndarray = field(repr=False)
    intensity: np.ndarray = field(repr=False)


def propagate_many(params, deltas, geom, scale, feedback=True):
    """Propagate the sigma beam for every two-photon detuning in ``deltas``.

    Intensities are in units of the entry intensity of each mode.  Pi modes
    are switched on only in repumped slices and are not attenuated, since the
    repump beam crosses the cell sideways.  With feedback each slice uses the
    absorption at its midpoint intensity (predicted from the entry value),
    which makes the slice error second order in the slice length.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    n = deltas.size
    factory = _GeneratorFactory(params)
    rabi0 = np.array([params.rabi(m) for m in SIGMA_MODES])
    weights = rabi0**2
    intensity = np.ones((geom.slices + 1, n, 2))
    alpha = np.zeros((geom.slices, n, 2))
    mask = geom.repumped()
    has_pi = any(params.rabi(m) > 0 for m in PI_MODES)
    dz = geom.dz

    def solve(k, pumped, rel_intensity):
        rabi = rabi0 * np.sqrt(rel_intensity)
        try:
            rho = steady_state_batch(factory(deltas, rabi[:, 0], rabi[:, 1], pumped))
        except SolverError as exc:
            raise PropagationError(f"slice {k}: {exc}", slice_index=k) from exc
        return _alpha_from_states(rho, rabi, params, scale)

    cache = {}
    alpha_entry = None
    for k in range(geom.slices):
        pumped = bool(mask[k]) and has_pi
        if not feedback:
            if pumped not in cache:
                cache[pumped] = solve(k, pumped, np.ones((n, 2)))
            alpha[k] = cache[pumped]
        else:
            a_in = solve(k, pumped, intensity[k])
            mid = intensity[k] * np.exp(-0.5 * a_in * dz)
            alpha[k] = solve(k, pumped, mid)
            if k == 0:
                alpha_entry = a_in
        if k == 0 and alpha_entry is None:
            alpha_entry = alpha[0]
        intensity[k + 1] = intensity[k] * np.exp(-alpha[k] * dz)
    total_in = weights.sum()
    if total_in == 0:
        transmission = np.ones(n)
    else:
        transmission = (intensity[-1] * weights).sum(axis=1) / total_in
    return PropagationRecord(
        transmission=transmission,
        alpha_entry={m: alpha_entry[:, i] for i, m in enumerate(SIGMA_MODES)},
        alpha=alpha,
        intensity=intensity,
    )


def _alpha_from_states(rho, rabi, params, scale):
    out = np.zeros(rabi.shape)
    cut = INERT_RABI_FRACTION * params.gamma_exc
    for i, mode in enumerate(SIGMA_MODES):
        g, e = MODE_EDGES[mode][0]
        r = rabi[:, i]
        live = r >= cut
        out[live, i] = (
            scale.kappa * params.gamma_exc * 2.0 * rho[live, g, e].imag / r[live]
        )
    return out


def propagate_cell(params, geom, scale, feedback=True):
    """Total transmission and per-slice record at ``params.delta``."""
    rec = propagate_many(params, [params.delta], geom, scale, feedback)
    return float(rec.transmission[0]), rec


@dataclass
class Spectrum:
    deltas: np.ndarray
    transmission: np.ndarray
    alpha_entry: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.deltas)

    def to_csv(self):
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key} = {value}\n")
        buf.write("delta_rad_s,transmission\n")
        for d, t in zip(self.deltas, self.transmission):
            buf.write(f"{float(d)!r},{float(t)!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        meta, rows = {}, []
        lines = iter(text.splitlines())
        for line in lines:
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            elif line.strip() == "delta_rad_s,transmission":
                break
        for line in lines:
            if line.strip():
                rows.append([float(x) for x in line.split(",")])
        arr = np.array(rows).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1], metadata=meta)


def scan_spectrum(params, geom, scale, delta_grid, feedback=True):
    delta_grid = np.asarray(delta_grid, dtype=float)
    if delta_grid.size == 0:
        raise ValueError("delta grid is empty")
    if np.any(np.diff(delta_grid) <= 0):
        raise ValueError("delta grid must be strictly increasing")
    try:
        rec = propagate_many(params, delta_grid, geom, scale, feedback)
    except PropagationError as exc:
        # locate the first failing detuning for the report
        for d in delta_grid:
            try:
                propagate_many(params, [d], geom, scale, feedback)
            except PropagationError:
                exc.delta = float(d)
                raise PropagationError(
                    f"delta={d:.6g} rad/s: {exc}", exc.slice_index, float(d)
                ) from exc
        raise
    return Spectrum(
        deltas=delta_grid,
        transmission=rec.transmission,
        alpha_entry=rec.alpha_entry,
        metadata={"kappa_per_m": scale.kappa},
    )


def delta_from_modulation(f_mod_hz, ground_hfs_hz=GROUND_HFS_HZ):
    """Two-photon detuning of the +-1 sidebands of a current-modulated laser."""
    return 2.0 * TWO_PI * f_mod_hz - TWO_PI * ground_hfs_hz


def small_signal_params(params, far_detuning=None):
    """Weak sigma drive, repump off, far off the two-photon resonance."""
    # optical pumping rate ~1e-4 of ground relaxation, yet well above the inert cut
    weak = max(1e-2 * math.sqrt(params.gamma_pop * params.gamma_exc),
               10 * INERT_RABI_FRACTION * params.gamma_exc)
    far = far_detuning if far_detuning is not None else 1e-3 * params.gamma_exc
    return params.with_rabi(sigma_a=weak, sigma_b=weak, pi_a=0.0, pi_b=0.0).replace(delta=far)


def calibrate_absorption_scale(params, geom, target_transparency, feedback=True, tol=1e-7):
    """Bisection on kappa so the cell transmits ``target_transparency``.

    ``params`` should already describe the small-signal condition (see
    :func:`small_signal_params`).
    """
    if not 0 < target_transparency <= 1:
        raise ValueError("target transparency must lie in (0, 1]")
    if target_transparency == 1:
        return AbsorptionScale(0.0, target_transparency, params.density)

    def trans(kappa):
        return propagate_cell(params, geom, AbsorptionScale(kappa), feedback)[0]

    lo, hi = 0.0, 1.0
    while trans(hi) > target_transparency:
        lo, hi = hi, hi * 2.0
        if hi > 1e12:
            raise ValueError("cannot reach target transparency")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        t = trans(mid)
        if abs(t - target_transparency) < tol:
            break
        if t > target_transparency:
            lo = mid
        else:
            hi = mid
    return AbsorptionScale(mid, target_transparency, params.density)
