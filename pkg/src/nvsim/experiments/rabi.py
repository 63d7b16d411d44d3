"""Pulsed resonant readout: time-resolved fluorescence under an optical pulse.

The detected arrival-time histogram is proportional to the excited-state
population trace (photons are emitted at rate population/lifetime), so the
oscillation during the pulse shows the optical Rabi frequency and the decay
after pulse-off shows the excited lifetime.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ..dynamics import (
    Drive,
    Envelope,
    NVModel,
    basis_density,
    evolve,
    optical_drive,
    EXCITED_INDICES,
)
from ..errors import InvalidBinningError, InvalidCalibrationError
from ..records import Spectrum

TCSPC_RESOLUTION_NS = 0.195


def readout_pulse(
    rabi_mhz: float,
    start: float = 50.0,
    stop: float = 90.0,
    rise: float = 1.0,
    ground_spin: int = 0,
    excited: str = "Ey",
    detuning_mhz: float = 0.0,
) -> Drive:
    """Square optical pulse on one transition (defaults: m=0 <-> Ey, 50-90 ns)."""
    return optical_drive(
        ground_spin,
        excited,
        rabi_mhz,
        detuning_mhz=detuning_mhz,
        envelope=Envelope(start=start, stop=stop, rise=rise),
    )


def simulate_rabi(
    model: NVModel,
    pulse: Drive,
    window_ns: float = 200.0,
    bin_ns: float = 0.5,
    seed: int = 0,
    *,
    n_shots: int = 1_000_000,
    collection_eff: float = 0.01,
    jitter_std_ns: float = 0.0,
    min_bin_ns: float = TCSPC_RESOLUTION_NS,
) -> Spectrum:
    """Arrival-time histogram of detected photons over repeated shots.

    Returns a Spectrum on the time axis (bin centers): expected counts per
    bin from the master-equation population trace, and a Poisson draw of
    them.  A Gaussian detector response of width jitter_std_ns is convolved
    in when nonzero.
    """
    if bin_ns < min_bin_ns:
        raise InvalidBinningError(
            f"bin {bin_ns} ns is below the timing resolution floor {min_bin_ns} ns"
        )
    if bin_ns > window_ns:
        raise InvalidBinningError(f"bin {bin_ns} ns exceeds the window {window_ns} ns")
    if n_shots < 1:
        raise InvalidBinningError(f"n_shots must be >= 1, got {n_shots}")

    n_bins = int(math.floor(window_ns / bin_ns + 1e-9))
    edges = bin_ns * np.arange(n_bins + 1)
    # oversample the population trace inside each bin for the integral
    oversample = 4
    t_fine = np.linspace(0.0, edges[-1], n_bins * oversample + 1)
    traj = evolve(model, basis_density("g0"), edges[-1], drives=[pulse], t_eval=t_fine)
    p_exc = np.zeros(t_fine.size)
    for i in EXCITED_INDICES:
        p_exc += traj.states[:, i, i].real

    emission = p_exc / model.excited_lifetime  # photons per ns per shot
    rates = np.empty(n_bins)
    for b in range(n_bins):
        seg = slice(b * oversample, b * oversample + oversample + 1)
        rates[b] = np.trapezoid(emission[seg], t_fine[seg])
    expected = n_shots * collection_eff * rates

    if jitter_std_ns > 0.0:
        half = max(1, int(math.ceil(4.0 * jitter_std_ns / bin_ns)))
        kernel_t = bin_ns * np.arange(-half, half + 1)
        kernel = np.exp(-0.5 * (kernel_t / jitter_std_ns) ** 2)
        kernel /= kernel.sum()
        expected = np.convolve(expected, kernel, mode="same")

    rng = np.random.default_rng(seed)
    sampled = rng.poisson(expected).astype(np.int64)
    centers = (edges[:-1] + edges[1:]) / 2.0
    return Spectrum(
        axis=centers, expected=expected, sampled=sampled, axis_label="time_ns"
    )


class ReadoutPopulation(NamedTuple):
    value: float
    clamped: bool


def resonant_readout_population(
    counts: float, c_m: float, c_b: float
) -> ReadoutPopulation:
    """Invert calibrated counts/shot into an m=0 population.

    c_m is the bright (fully m=0) calibration, c_b the dark background; the
    population is (counts - c_b) / (c_m - c_b), clamped into [0, 1] with the
    clamp flagged.
    """
    if c_m <= c_b:
        raise InvalidCalibrationError(
            f"bright calibration {c_m} must exceed background {c_b}"
        )
    raw = (counts - c_b) / (c_m - c_b)
    clamped = min(max(raw, 0.0), 1.0)
    return ReadoutPopulation(value=clamped, clamped=clamped != raw)


__all__ = [
    "TCSPC_RESOLUTION_NS",
    "readout_pulse",
    "simulate_rabi",
    "ReadoutPopulation",
    "resonant_readout_population",
]
