"""Seven-level effective model of the Rb-87 D1 clock transition.

Level ordering (0-based array index in brackets)::

    [0] Clock1      F=1, mF=0
    [1] Clock2      F=2, mF=0
    [2] CptExcited  F'=2, mF=1
    [3] Trap        lumped mF != 0 ground sublevels
    [4] PiExcited   lumped mF != 0 excited sublevels (excluding CptExcited)
    [5] OffRes1     F'=1, mF=0
    [6] OffRes2     F'=2, mF=0

All rates and detunings are angular frequencies in rad/s.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources

import numpy as np

TWO_PI = 2.0 * math.pi

GAMMA_NATURAL = TWO_PI * 5.75e6
# Rb D1 broadening by N2, Hz (FWHM) per Torr
N2_BROADENING_HZ_PER_TORR = 17.8e6
BUFFER_PRESSURE_TORR = 10.0
GROUND_HFS_HZ = 6.834682610904e9
EXCITED_HFS_HZ = 816.656e6
DENSITY_PER_M3 = 7e10 * 1e6


class LevelIndex(enum.IntEnum):
    CLOCK1 = 0
    CLOCK2 = 1
    CPT_EXCITED = 2
    TRAP = 3
    PI_EXCITED = 4
    OFF_RES1 = 5
    OFF_RES2 = 6


N_LEVELS = len(LevelIndex)
GROUND = (LevelIndex.CLOCK1, LevelIndex.CLOCK2, LevelIndex.TRAP)
EXCITED = (
    LevelIndex.CPT_EXCITED,
    LevelIndex.PI_EXCITED,
    LevelIndex.OFF_RES1,
    LevelIndex.OFF_RES2,
)
THERMAL_WEIGHTS = (1 / 8, 1 / 8, 6 / 8)


class ModeId(enum.Enum):
    SIGMA_A = "sigma_a"
    SIGMA_B = "sigma_b"
    PI_A = "pi_a"
    PI_B = "pi_b"


# (resonant edge, off-resonant edge or None)
MODE_EDGES = {
    ModeId.SIGMA_A: ((LevelIndex.CLOCK2, LevelIndex.CPT_EXCITED), None),
    ModeId.SIGMA_B: ((LevelIndex.CLOCK1, LevelIndex.CPT_EXCITED), None),
    ModeId.PI_A: (
        (LevelIndex.TRAP, LevelIndex.PI_EXCITED),
        (LevelIndex.CLOCK2, LevelIndex.OFF_RES1),
    ),
    ModeId.PI_B: (
        (LevelIndex.TRAP, LevelIndex.PI_EXCITED),
        (LevelIndex.CLOCK1, LevelIndex.OFF_RES2),
    ),
}
SIGMA_MODES = (ModeId.SIGMA_A, ModeId.SIGMA_B)
PI_MODES = (ModeId.PI_A, ModeId.PI_B)


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class FieldMode:
    id: ModeId
    rabi: float = 0.0
    detuning: float = 0.0

    @property
    def drives(self):
        return MODE_EDGES[self.id]

    def __post_init__(self):
        if not self.rabi >= 0.0:
            raise ModelError(f"{self.id.value}: Rabi frequency must be >= 0, got {self.rabi}")


def excited_linewidth(pressure_torr=BUFFER_PRESSURE_TORR,
                      broadening_hz_per_torr=N2_BROADENING_HZ_PER_TORR):
    """Natural plus pressure-broadened excited-state decay rate (rad/s)."""
    return GAMMA_NATURAL + TWO_PI * broadening_hz_per_torr * pressure_torr


def _default_modes():
    return tuple(FieldMode(m) for m in ModeId)


@dataclass(frozen=True)
class ModelParams:
    """Physical and effective parameters of the seven-level model.

    ``branching[e][g]`` is indexed by position in ``EXCITED`` and ``GROUND``.
    """

    modes: tuple = field(default_factory=_default_modes)
    delta: float = 0.0
    gamma_exc: float = field(default_factory=excited_linewidth)
    branching: np.ndarray = field(default_factory=lambda: default_branching_table())
    gamma_pop: float = TWO_PI * 100.0
    gamma_coh: float = TWO_PI * 300.0
    thermal_weights: tuple = THERMAL_WEIGHTS
    density: float = DENSITY_PER_M3
    off_res_detuning: float = TWO_PI * EXCITED_HFS_HZ

    def __post_init__(self):
        b = np.asarray(self.branching, dtype=float)
        object.__setattr__(self, "branching", b)
        if b.shape != (4, 3):
            raise ModelError(f"branching table must be 4x3, got {b.shape}")
        if np.any(b < 0) or np.any(np.abs(b.sum(axis=1) - 1.0) > 1e-12):
            raise ModelError("branching rows must be non-negative and sum to 1")
        if b[2, 0] != 0.0 or b[3, 1] != 0.0:
            raise ModelError("forbidden mF=0 -> mF=0 decay channels must be zero")
        w = np.asarray(self.thermal_weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ModelError("thermal weights must be non-negative and sum to 1")
        if not (self.gamma_pop > 0 and self.gamma_exc > 0):
            raise ModelError("gamma_pop and gamma_exc must be positive")
        if self.gamma_coh < 0:
            raise ModelError("gamma_coh must be >= 0")
        if [m.id for m in self.modes] != list(ModeId):
            raise ModelError("modes must list sigma_a, sigma_b, pi_a, pi_b in order")

    def mode(self, mode_id):
        return self.modes[list(ModeId).index(mode_id)]

    def rabi(self, mode_id):
        return self.mode(mode_id).rabi

    def with_rabi(self, **rabis):
        """Copy with Rabi frequencies replaced, keyed by ``ModeId.value``."""
        modes = tuple(
            replace(m, rabi=float(rabis[m.id.value])) if m.id.value in rabis else m
            for m in self.modes
        )
        return replace(self, modes=modes)

    def with_detunings(self, **detunings):
        modes = tuple(
            replace(m, detuning=float(detunings[m.id.value]))
            if m.id.value in detunings else m
            for m in self.modes
        )
        return replace(self, modes=modes)

    def replace(self, **changes):
        return replace(self, **changes)


def coupling_edges():
    """Every (ground, excited) pair touched by a field mode."""
    edges = []
    for resonant, off in MODE_EDGES.values():
        for e in (resonant, off):
            if e is not None and e not in edges:
                edges.append(e)
    return edges


def _is_forest(edges, n):
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def coupling_graph_is_acyclic(edges=None):
    return _is_forest(edges if edges is not None else coupling_edges(), N_LEVELS)


def diagonal_energies(params):
    """Rotating-frame level energies; Clock2 is the phase reference."""
    d = np.zeros(N_LEVELS)
    sig_a = params.mode(ModeId.SIGMA_A).detuning
    sig_b = params.mode(ModeId.SIGMA_B).detuning
    d[LevelIndex.CPT_EXCITED] = -sig_a
    d[LevelIndex.CLOCK1] = params.delta + sig_b - sig_a
    # PiA sits on F=2 -> F'=2, so F'=1 lies below it; PiB on F=1 -> F'=1, F'=2 above
    d[LevelIndex.OFF_RES1] = d[LevelIndex.CLOCK2] - params.off_res_detuning
    d[LevelIndex.OFF_RES2] = d[LevelIndex.CLOCK1] + params.off_res_detuning
    d[LevelIndex.PI_EXCITED] = d[LevelIndex.TRAP]
    return d


def off_diagonal_couplings(params):
    """Map edge -> Rabi frequency.

    The two pi modes hit the Trap <-> PiExcited edge at different optical
    frequencies, so their pumping rates add: the lumped edge carries
    sqrt(Omega_A**2 + Omega_B**2).
    """
    pi_a, pi_b = params.rabi(ModeId.PI_A), params.rabi(ModeId.PI_B)
    return {
        MODE_EDGES[ModeId.SIGMA_A][0]: params.rabi(ModeId.SIGMA_A),
        MODE_EDGES[ModeId.SIGMA_B][0]: params.rabi(ModeId.SIGMA_B),
        MODE_EDGES[ModeId.PI_A][0]: math.hypot(pi_a, pi_b),
        MODE_EDGES[ModeId.PI_A][1]: pi_a,
        MODE_EDGES[ModeId.PI_B][1]: pi_b,
    }


def build_hamiltonian(params):
    """Rotating-wave Hamiltonian (rad/s), exactly Hermitian."""
    couplings = off_diagonal_couplings(params)
    if not coupling_graph_is_acyclic(list(couplings)):
        raise ModelError("coupling graph has a cycle; no static rotating frame exists")
    h = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    h[np.diag_indices(N_LEVELS)] = diagonal_energies(params)
    for (g, e), rabi in couplings.items():
        i, j = min(g, e), max(g, e)
        h[i, j] = 0.5 * rabi
        h[j, i] = np.conj(h[i, j])
    return h


def thermal_state():
    rho = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    for g, w in zip(GROUND, THERMAL_WEIGHTS):
        rho[g, g] = w
    return rho


# --- branching ratios from angular-momentum algebra -------------------------

def _fact(x):
    return math.factorial(int(round(x)))


def _triangle(a, b, c):
    return _fact(a + b - c) * _fact(a - b + c) * _fact(-a + b + c) / _fact(a + b + c + 1)


def wigner_3j(j1, j2, j3, m1, m2, m3):
    if abs(m1 + m2 + m3) > 1e-9:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if j3 > j1 + j2 or j3 < abs(j1 - j2):
        return 0.0
    pre = math.sqrt(
        _triangle(j1, j2, j3)
        * _fact(j1 + m1) * _fact(j1 - m1)
        * _fact(j2 + m2) * _fact(j2 - m2)
        * _fact(j3 + m3) * _fact(j3 - m3)
    )
    kmin = int(round(max(0, j2 - j3 - m1, j1 - j3 + m2)))
    kmax = int(round(min(j1 + j2 - j3, j1 - m1, j2 + m2)))
    total = 0.0
    for k in range(kmin, kmax + 1):
        total += (-1) ** k / (
            _fact(k) * _fact(j1 + j2 - j3 - k) * _fact(j1 - m1 - k)
            * _fact(j2 + m2 - k) * _fact(j3 - j2 + m1 + k) * _fact(j3 - j1 - m2 + k)
        )
    return (-1) ** int(round(j1 - j2 - m3)) * pre * total


def wigner_6j(j1, j2, j3, j4, j5, j6):
    triads = [(j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3)]
    for a, b, c in triads:
        if c > a + b or c < abs(a - b) or abs((a + b + c) - round(a + b + c)) > 1e-9:
            return 0.0
    pre = math.prod(math.sqrt(_triangle(*t)) for t in triads)
    sums = [sum(t) for t in triads]
    tops = [j1 + j2 + j4 + j5, j2 + j3 + j5 + j6, j3 + j1 + j6 + j4]
    total = 0.0
    for t in range(int(round(max(sums))), int(round(min(tops))) + 1):
        den = math.prod(_fact(t - s) for s in sums) * math.prod(_fact(u - t) for u in tops)
        total += (-1) ** t * _fact(t + 1) / den
    return pre * total


def decay_probability(f_e, m_e, f_g, m_g, j_e=0.5, j_g=0.5, nuclear_spin=1.5):
    """Probability that |F' m'> decays into |F m> (sums to 1 over all F, m)."""
    q = m_e - m_g
    if abs(q) > 1:
        return 0.0
    six = wigner_6j(j_g, j_e, 1, f_e, f_g, nuclear_spin)
    three = wigner_3j(f_g, 1, f_e, m_g, q, -m_e)
    return (2 * j_e + 1) * (2 * f_g + 1) * (2 * f_e + 1) * six**2 * three**2


def _ground_group(f, m):
    if m == 0:
        return 0 if f == 1 else 1
    return 2


def compute_branching_table():
    """Lump the 16-level D1 decay strengths onto the effective levels."""
    ground = [(f, m) for f in (1, 2) for m in range(-f, f + 1)]
    excited = [(f, m) for f in (1, 2) for m in range(-f, f + 1)]
    groups = [
        [(2, 1)],
        [(f, m) for f, m in excited if m != 0 and (f, m) != (2, 1)],
        [(1, 0)],
        [(2, 0)],
    ]
    table = np.zeros((4, 3))
    for row, members in enumerate(groups):
        for f_e, m_e in members:
            for f_g, m_g in ground:
                table[row, _ground_group(f_g, m_g)] += decay_probability(f_e, m_e, f_g, m_g)
        table[row] /= len(members)
    return table


def load_branching_table(path):
    """Read a branching fixture: ``#`` comments, a header line, four rows."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    header, body = lines[0], lines[1:]
    if header[1:] != ["Clock1", "Clock2", "Trap"]:
        raise ModelError(f"unexpected branching header {header}")
    names = [r[0] for r in body]
    if names != ["CptExcited", "PiExcited", "OffRes1", "OffRes2"]:
        raise ModelError(f"unexpected branching rows {names}")
    for r in body:
        rows.append([float(x) for x in r[1:]])
    table = np.array(rows)
    # fixture carries 7 significant digits; restore exact row sums
    return table / table.sum(axis=1, keepdims=True)


@lru_cache(maxsize=1)
def _packaged_table():
    with resources.as_file(resources.files("cptsim") / "data" / "branching_d1.txt") as p:
        return load_branching_table(p)


def default_branching_table():
    return _packaged_table().copy()
