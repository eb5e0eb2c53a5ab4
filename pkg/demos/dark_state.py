"""Thin-slice view of the clock resonance, populations first.

Prints the steady-state ground populations and the CPT-mode absorption as
the two-photon detuning walks through zero.  At the top CPT intensity the
trap state holds most of the atoms; switching the repump on pulls them back
into the clock pair, and the dip in absorption deepens.

    python demos/dark_state.py
"""
import numpy as np

from cptsim.experiments import calibrated_intensity_map, calibrated_params
from cptsim.liouvillian import assemble_channels, build_liouvillian, steady_state
from cptsim.model import TWO_PI, LevelIndex, build_hamiltonian
from cptsim.spectroscopy import (
    AbsorptionScale,
    absorption_coefficients,
)

imap = calibrated_intensity_map()
base = calibrated_params()
scale = AbsorptionScale(kappa=1.0)

for repump in (0.0, 3000.0):
    print(f"CPT 12960 uW/cm^2, repump {repump:g} uW/cm^2")
    print("  delta/2pi (Hz)   Clock1   Clock2    Trap   alpha (arb.)")
    for delta_hz in (-20e3, -5e3, -1e3, 0.0, 1e3, 5e3, 20e3):
        p = imap.apply(base, 12960.0, repump).replace(delta=TWO_PI * delta_hz)
        rho = steady_state(build_liouvillian(build_hamiltonian(p), assemble_channels(p)))
        pops = rho.diagonal().real
        alpha = sum(absorption_coefficients(rho, p, scale).values())
        print(f"  {delta_hz:14.0f} {pops[LevelIndex.CLOCK1]:8.4f} {pops[LevelIndex.CLOCK2]:8.4f}"
              f" {pops[LevelIndex.TRAP]:7.4f} {alpha:12.4e}")
