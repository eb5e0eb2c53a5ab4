"""Run configuration: an INI document whose keys carry explicit unit suffixes.

Every dimensional key must end in one of the unit suffixes allowed for its
quantity (``gamma_pop_Hz``, ``length_mm``, ``cpt_intensities_uW_cm2``, ...).
Values are converted to SI / angular units on load.  Missing keys fall back
to the package's calibrated operating point.  A key without a suffix, an
unknown key, or a bad unit is a :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .experiments import (
    CALIBRATED,
    MEASURED_CPT_INTENSITIES,
    MEASURED_REPUMP_INTENSITIES,
    PREDICTION_CPT_INTENSITIES,
    PREDICTION_REPUMP_INTENSITIES,
    DeltaGrid,
    IntensityMap,
)
from .model import (
    BUFFER_PRESSURE_TORR,
    N2_BROADENING_HZ_PER_TORR,
    TWO_PI,
    ModelParams,
    default_branching_table,
    excited_linewidth,
    load_branching_table,
)
from .spectroscopy import CellGeometry

CAMPAIGNS = ("steady-state", "spectrum", "sweep-repump", "sweep-cpt", "calibrate",
             "predict-full-overlap")

UNITS = {
    "freq": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "length": {"m": 1.0, "cm": 1e-2, "mm": 1e-3},
    "density": {"per_cc": 1e6, "per_m3": 1.0},
    "intensity": {"uW_cm2": 1.0, "mW_cm2": 1e3},
    "pressure": {"torr": 1.0},
    "field": {"mG": 1.0, "G": 1e3},
    "rabi_const": {"rad_s_per_sqrt_uW_cm2": 1.0},
    "broadening": {"MHz_per_torr": 1e6, "Hz_per_torr": 1.0},
}

# section -> key base -> (quantity, is_list)
SCHEMA = {
    "model": {
        "gamma_pop": ("freq", False),
        "gamma_coh": ("freq", False),
        "gamma_exc": ("freq", False),
        "buffer_pressure": ("pressure", False),
        "n2_broadening": ("broadening", False),
        "off_res_detuning": ("freq", False),
        "density": ("density", False),
        "sigma_a_detuning": ("freq", False),
        "sigma_b_detuning": ("freq", False),
        "magnetic_field": ("field", False),
        "branching_file": ("path", False),
    },
    "cell": {
        "length": ("length", False),
        "repump_start": ("length", False),
        "repump_end": ("length", False),
        "slices": ("int", False),
        "transparency": ("float", False),
    },
    "intensity": {
        "cpt_intensities": ("intensity", True),
        "repump_intensities": ("intensity", True),
        "sigma_rabi": ("rabi_const", False),
        "pi_rabi": ("rabi_const", False),
        "sigma_split": ("float", False),
        "pi_split": ("float", False),
    },
    "grid": {
        "points": ("int", False),
        "span_fwhm": ("float", False),
        "delta_values": ("freq", True),
    },
    "run": {
        "campaign": ("str", False),
        "seed": ("int", False),
        "feedback": ("bool", False),
        "cpt_intensity": ("intensity", False),
        "repump_intensity": ("intensity", False),
        "delta": ("freq", False),
        "modulation_frequency": ("freq", False),
        "jobs": ("int", False),
    },
    "calibrate": {
        "measured_file": ("path", False),
    },
    "predict": {
        "cpt_intensities": ("intensity", True),
        "repump_intensities": ("intensity", True),
    },
}


class ConfigError(ValueError):
    pass


def _split_key(section, key):
    """Return (base, quantity, is_list, factor) for a raw config key."""
    for base, (qty, is_list) in SCHEMA[section].items():
        if qty in UNITS:
            for suffix, factor in UNITS[qty].items():
                if key == f"{base}_{suffix}":
                    return base, qty, is_list, factor
            if key == base or key.startswith(base + "_"):
                raise ConfigError(
                    f"[{section}] {key}: needs a unit suffix, one of "
                    + ", ".join(f"{base}_{s}" for s in UNITS[qty])
                )
        elif key == base:
            return base, qty, is_list, 1.0
    raise ConfigError(f"[{section}] {key}: unknown key")


def _parse_value(section, key, qty, is_list, factor, raw, base_dir):
    try:
        if is_list:
            items = [s for s in raw.replace("\n", ",").split(",") if s.strip()]
            if not items:
                raise ConfigError(f"[{section}] {key}: list is empty")
            return tuple(float(s) * factor for s in items)
        if qty == "int":
            return int(raw)
        if qty == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ConfigError(f"[{section}] {key}: not a boolean: {raw!r}")
            return low in ("true", "yes", "1", "on")
        if qty == "str":
            return raw.strip()
        if qty == "path":
            path = Path(raw.strip())
            if not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ConfigError(f"[{section}] {key}: file not found: {path}")
            return path
        value = float(raw) * factor
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"[{section}] {key}: value must be finite")
    return value


def canonical_text(parser):
    lines = []
    for section in sorted(parser.sections()):
        lines.append(f"[{section}]")
        for key in sorted(parser[section]):
            lines.append(f"{key} = {' '.join(parser[section][key].split())}")
    return "\n".join(lines) + "\n"


@dataclass
class RunConfig:
    params: ModelParams
    geometry: CellGeometry
    intensity: IntensityMap
    grid: DeltaGrid
    campaign: str = "spectrum"
    transparency: float = 0.40
    feedback: bool = True
    seed: int = 0
    jobs: int = 1
    cpt_intensity: float = 8640.0
    repump_intensity: float = 0.0
    delta: float = 0.0
    measured_file: Path | None = None
    predict_cpt: tuple = PREDICTION_CPT_INTENSITIES
    predict_repump: tuple = PREDICTION_REPUMP_INTENSITIES
    magnetic_field_mG: float = 20.0
    text: str = ""
    values: dict = field(default_factory=dict)

    @property
    def hash(self):
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()[:16]


def parse_config(text, base_dir=".", overrides=None):
    """Build a :class:`RunConfig` from INI text.

    ``overrides`` maps ``(section, key)`` to a raw string, applied before
    parsing (the CLI uses it for ``--campaign`` and ``--no-feedback``).
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for (section, key), raw in (overrides or {}).items():
        if not parser.has_section(section):
            parser.add_section(section)
        parser[section][key] = raw
    base_dir = Path(base_dir)
    vals = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"[{section}]: unknown section")
        for key, raw in parser[section].items():
            base, qty, is_list, factor = _split_key(section, key)
            if (section, base) in vals:
                raise ConfigError(f"[{section}] {key}: {base} given twice")
            vals[(section, base)] = _parse_value(section, key, qty, is_list, factor, raw, base_dir)
    cfg = _build(vals)
    cfg.text = canonical_text(parser)
    return cfg


def load_config(path, overrides=None):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, path.parent, overrides)


def _build(vals):
    def get(section, base, default):
        return vals.get((section, base), default)

    cal = CALIBRATED
    if ("model", "branching_file") in vals:
        try:
            branching = load_branching_table(vals[("model", "branching_file")])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"[model] branching_file: {exc}") from exc
    else:
        branching = default_branching_table()
    if ("model", "gamma_exc") in vals:
        gamma_exc = TWO_PI * vals[("model", "gamma_exc")]
    else:
        gamma_exc = excited_linewidth(
            get("model", "buffer_pressure", BUFFER_PRESSURE_TORR),
            get("model", "n2_broadening", N2_BROADENING_HZ_PER_TORR),
        )
    try:
        params = ModelParams(
            gamma_exc=gamma_exc,
            branching=branching,
            gamma_pop=TWO_PI * get("model", "gamma_pop", cal["gamma_pop_hz"]),
            gamma_coh=TWO_PI * get("model", "gamma_coh", cal["gamma_coh_hz"]),
            density=get("model", "density", 7e16),
            off_res_detuning=TWO_PI * get("model", "off_res_detuning", cal["off_res_detuning_hz"]),
        ).with_detunings(
            sigma_a=TWO_PI * get("model", "sigma_a_detuning", 0.0),
            sigma_b=TWO_PI * get("model", "sigma_b_detuning", 0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}") from exc
    try:
        geometry = CellGeometry(
            length=get("cell", "length", 0.018),
            repump_start=get("cell", "repump_start", 0.006),
            repump_end=get("cell", "repump_end", 0.012),
            slices=get("cell", "slices", 48),
        )
    except ValueError as exc:
        raise ConfigError(f"[cell]: {exc}") from exc
    transparency = get("cell", "transparency", 0.40)
    if not 0 < transparency <= 1:
        raise ConfigError("[cell] transparency: must lie in (0, 1]")
    try:
        imap = IntensityMap(
            cpt_intensities=get("intensity", "cpt_intensities", MEASURED_CPT_INTENSITIES),
            repump_intensities=get("intensity", "repump_intensities", MEASURED_REPUMP_INTENSITIES),
            sigma_rabi_per_sqrt=get("intensity", "sigma_rabi", cal["sigma_rabi_per_sqrt"]),
            pi_rabi_per_sqrt=get("intensity", "pi_rabi", cal["pi_rabi_per_sqrt"]),
            sigma_split=get("intensity", "sigma_split", 0.5),
            pi_split=get("intensity", "pi_split", 0.5),
        )
    except ValueError as exc:
        raise ConfigError(f"[intensity]: {exc}") from exc
    values = get("grid", "delta_values", None)
    if values is not None:
        values = tuple(TWO_PI * v for v in values)
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError("[grid] delta_values: must be strictly increasing")
    points = get("grid", "points", 201)
    if points < 5:
        raise ConfigError("[grid] points: need at least 5")
    span = get("grid", "span_fwhm", 10.0)
    if not span > 0:
        raise ConfigError("[grid] span_fwhm: must be positive")
    grid = DeltaGrid(points=points, span_fwhm=span, values=values)

    campaign = get("run", "campaign", "spectrum")
    if campaign not in CAMPAIGNS:
        raise ConfigError(f"[run] campaign: {campaign!r} is not one of {', '.join(CAMPAIGNS)}")
    if ("run", "delta") in vals and ("run", "modulation_frequency") in vals:
        raise ConfigError("[run] delta and modulation_frequency are mutually exclusive")
    if ("run", "modulation_frequency") in vals:
        from .spectroscopy import delta_from_modulation
        delta = delta_from_modulation(vals[("run", "modulation_frequency")])
    else:
        delta = TWO_PI * get("run", "delta", 0.0)
    jobs = get("run", "jobs", 1)
    if jobs < 1:
        raise ConfigError("[run] jobs: must be >= 1")
    for sec, key in (("run", "cpt_intensity"), ("run", "repump_intensity")):
        if get(sec, key, 0.0) < 0:
            raise ConfigError(f"[{sec}] {key}: must be >= 0")
    measured = get("calibrate", "measured_file", None)
    if campaign == "calibrate" and measured is None and ("calibrate", "measured_file") in vals:
        raise ConfigError("[calibrate] measured_file: missing")
    return RunConfig(
        params=params,
        geometry=geometry,
        intensity=imap,
        grid=grid,
        campaign=campaign,
        transparency=transparency,
        feedback=get("run", "feedback", True),
        seed=get("run", "seed", 0),
        jobs=jobs,
        cpt_intensity=get("run", "cpt_intensity", 8640.0),
        repump_intensity=get("run", "repump_intensity", 0.0),
        delta=delta,
        measured_file=measured,
        predict_cpt=get("predict", "cpt_intensities", PREDICTION_CPT_INTENSITIES),
        predict_repump=get("predict", "repump_intensities", PREDICTION_REPUMP_INTENSITIES),
        magnetic_field_mG=get("model", "magnetic_field", 20.0),
        values={f"{s}.{k}": v for (s, k), v in vals.items()},
    )
