"""Two-laser dark-resonance experiments on the lambda system.

A single linearly polarized field couples both |+-1> grounds to one excited
state (A1 or A2 character); a second field on the m=0 <-> Ey transition
recycles population that leaks out of the lambda.  Scanning an axial
magnetic field tunes the two-photon detuning: fluorescence dips appear where
a dark superposition forms, one per 14N nuclear projection, split by twice
the ground-state hyperfine coupling.

Configured powers are weak-field excitation rates in MHz.  They map onto
Rabi amplitudes through omega = sqrt(CAL * rate * gamma) (rates in 1/ns),
and the openness parameter eta sets the lambda excited state's leak
branching toward the recycle ground as leak = LEAK_CAL * cross_leak / eta
(capped).  Both constants were fixed once by matching fitted dip widths of
the steady-state generator to the closed-form linewidth over the working
range (excitation rates 0.25..1 MHz, eta from 3e-2 to 2.6); agreement there
is a few percent, degrading to ~10% by 2 MHz as saturation sets in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import null_space

from ..dynamics import (
    LEVEL_INDEX,
    NVModel,
    assemble_generator,
    build_nv_model,
    lambda_drive,
    optical_drive,
)
from ..errors import (
    InvalidParameterError,
    InvalidProtocolError,
    NonUniqueSteadyStateError,
    NoSignalError,
)
from ..levels import GroundParams
from ..records import Spectrum

# rate -> Rabi and eta -> leak calibrations (see module docstring)
RATE_CALIBRATION = 3.325
LEAK_CALIBRATION = 1.05


def cpt_linewidth(r_a: float, r_e: float, gamma: float, eta: float) -> float:
    """Closed-form dark-resonance width (MHz).

    delta_0 = sqrt( R_A^2 / (1 + (1/eta) (R_A/R_E + 2 R_A/gamma)) ).
    All rates in MHz; gamma is the excited-state decay rate 1e3/lifetime_ns.
    """
    for name, val in (("r_a", r_a), ("r_e", r_e), ("gamma", gamma), ("eta", eta)):
        if val <= 0:
            raise InvalidParameterError(f"{name} must be > 0, got {val}")
    bracket = 1.0 + (1.0 / eta) * (r_a / r_e + 2.0 * r_a / gamma)
    return math.sqrt(r_a * r_a / bracket)


@dataclass(frozen=True)
class CPTConfig:
    """Dark-resonance scan settings.

    r_a_mhz / r_e_mhz are the lambda and recycle weak-field excitation rates;
    b_scan is the axial-field axis in gauss; carbon13_overhauser_std (MHz) is
    the Gaussian spread of the nuclear-bath two-photon shift, convolved into
    the expected spectrum.
    """

    lambda_state: str = "A2"
    r_a_mhz: float = 0.5
    r_e_mhz: float = 2.0
    eta: float = 2.6
    b_scan: tuple[float, ...] = ()
    hyperfine_gs: float = 2.2
    hyperfine_es_factor: float = 20.0
    carbon13_overhauser_std: float = 0.0
    count_window: float = 3e6
    collection_eff: float = 0.02

    def __post_init__(self) -> None:
        if self.lambda_state not in ("A1", "A2"):
            raise InvalidProtocolError(
                f"lambda_state must be A1 or A2, got {self.lambda_state!r}"
            )
        if self.r_a_mhz < 0 or self.r_e_mhz < 0:
            raise InvalidProtocolError("excitation rates must be >= 0")
        if self.eta <= 0:
            raise InvalidProtocolError(f"eta must be > 0, got {self.eta}")
        if self.hyperfine_gs < 0 or self.hyperfine_es_factor < 0:
            raise InvalidProtocolError("hyperfine parameters must be >= 0")
        if self.carbon13_overhauser_std < 0:
            raise InvalidProtocolError("carbon13_overhauser_std must be >= 0")
        if self.count_window <= 0 or not 0.0 < self.collection_eff <= 1.0:
            raise InvalidProtocolError("count_window and collection_eff out of range")


def _rate_to_rabi_mhz(rate_mhz: float, model: NVModel) -> float:
    """Map a weak-field excitation rate (MHz) onto a Rabi amplitude (MHz)."""
    gamma_ns = model.excited_decay_rate
    omega_rad = math.sqrt(RATE_CALIBRATION * rate_mhz * 1e-3 * gamma_ns)
    return omega_rad / (2.0e-3 * math.pi)


def _lambda_model(model: NVModel, config: CPTConfig, z_shift_mhz: float) -> NVModel:
    """Reduced-model variant: leak branching from eta, grounds shifted by the field.

    z_shift_mhz is the total m=+1 shift (Zeeman plus hyperfine plus bath);
    it is folded into an effective b_field.
    """
    leak = min(LEAK_CALIBRATION * model.cross_leak_ey / config.eta, 0.95)
    row = (leak, (1.0 - leak) / 2.0, (1.0 - leak) / 2.0, 0.0)
    gp = model.ground_params
    eff_field = GroundParams(
        d_gs=gp.d_gs,
        zeeman_per_gauss=gp.zeeman_per_gauss,
        b_field=z_shift_mhz / gp.zeeman_per_gauss,
    )
    base = build_nv_model(
        excited=model.excited_params,
        ground=eff_field,
        excited_lifetime=model.excited_lifetime,
        singlet_lifetime=model.singlet_lifetime,
        cross_leak_ey=model.cross_leak_ey,
        branching={config.lambda_state: row},
        singlet_branching=model.singlet_branching,
    )
    return base


def _reduced_steady_state(parts) -> np.ndarray:
    gen = parts.combined()
    ns = null_space(gen, rcond=1e-10)
    if ns.shape[1] != 1:
        raise NonUniqueSteadyStateError(
            f"reduced generator null space has dimension {ns.shape[1]}"
        )
    n = parts.dim
    rho = ns[:, 0].reshape(n, n)
    rho = (rho + rho.conj().T) / 2.0
    return rho / float(np.trace(rho).real)


def _scatter_rate(model: NVModel, config: CPTConfig, z_shift_mhz: float) -> float:
    """Steady-state photon emission rate (1/ns) of the driven reduced system."""
    variant = _lambda_model(model, config, z_shift_mhz)
    e_idx = LEVEL_INDEX[config.lambda_state]
    # lambda-drive dipole weights are 1/2 per leg; the factor 2 makes the
    # per-leg Rabi amplitude match the single-transition recycle convention
    drives = [
        lambda_drive(config.lambda_state, 2.0 * _rate_to_rabi_mhz(config.r_a_mhz, model)),
        optical_drive(0, "Ey", _rate_to_rabi_mhz(config.r_e_mhz, model)),
    ]
    parts = assemble_generator(variant, drives, subset=(0, 1, 2, e_idx, 6))
    rho = _reduced_steady_state(parts)
    p_exc = sum(
        rho[loc, loc].real
        for full, loc in parts.local_index.items()
        if full in (e_idx, 6)
    )
    return p_exc * model.excited_decay_rate


def simulate_cpt(
    model: NVModel,
    config: CPTConfig,
    seed: int = 0,
    m_i_weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> Spectrum:
    """Fluorescence vs axial field: dark-resonance dips per 14N projection.

    Each nuclear projection m_I shifts the |+-1> levels like an extra field
    of hyperfine_gs * m_I, so its dip sits at the compensating field; the
    three resonances are summed with m_i_weights (equal by default,
    unpolarized nucleus).  A nonzero carbon13_overhauser_std Gaussian-blurs
    the expected spectrum along the field axis.
    """
    axis = np.asarray(config.b_scan, dtype=float)
    if axis.size == 0:
        raise InvalidProtocolError("b_scan is empty")
    weights = np.asarray(m_i_weights, dtype=float)
    if weights.shape != (3,) or np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidProtocolError("m_i_weights must be three nonnegative numbers")
    weights = weights / weights.sum()

    zeeman = model.ground_params.zeeman_per_gauss
    expected_rate = np.zeros(axis.size)
    for w, m_i in zip(weights, (-1, 0, +1)):
        if w == 0.0:
            continue
        for j, b in enumerate(axis):
            z_shift = zeeman * b + config.hyperfine_gs * m_i
            expected_rate[j] += w * _scatter_rate(model, config, z_shift)

    # steady-state populations can round a hair negative; counts cannot
    expected = np.maximum(expected_rate, 0.0) * config.count_window * config.collection_eff

    if config.carbon13_overhauser_std > 0.0 and axis.size > 1:
        steps = np.diff(axis)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-6 * abs(steps[0]):
            raise InvalidProtocolError(
                "carbon13 convolution needs a uniform increasing b_scan"
            )
        sigma_b = config.carbon13_overhauser_std / (2.0 * zeeman)
        db = float(steps[0])
        half = max(1, int(math.ceil(4.0 * sigma_b / db)))
        kt = db * np.arange(-half, half + 1)
        kernel = np.exp(-0.5 * (kt / sigma_b) ** 2)
        kernel /= kernel.sum()
        # edge-pad so the convolution does not dim the spectrum ends
        padded = np.concatenate(
            [np.full(half, expected[0]), expected, np.full(half, expected[-1])]
        )
        expected = np.convolve(padded, kernel, mode="valid")

    rng = np.random.default_rng(seed)
    sampled = rng.poisson(expected).astype(np.int64)
    return Spectrum(axis=axis, expected=expected, sampled=sampled, axis_label="field_gauss")


# ---------------------------------------------------------------------------
# nuclear-spin cooling by dark-resonance selection

@dataclass
class CoolingResult:
    cycles: np.ndarray        # optical-cycle index of each sample
    populations: np.ndarray   # (n_samples, 3) fractions for m_I = (-1, 0, +1)
    resonant_m_i: int


def nuclear_flip_probability(config: CPTConfig, model: NVModel) -> float:
    """Per-excitation hyperfine flip-flop probability.

    The excited-state hyperfine coupling (ground value scaled by
    hyperfine_es_factor) precesses the nuclear spin during the excited-state
    residency; the saturating form x^2/(2(1+x^2)) with
    x = 2 pi a_es tau_exc keeps it a probability.
    """
    a_es = config.hyperfine_es_factor * config.hyperfine_gs  # MHz
    x = 2.0e-3 * math.pi * a_es * model.excited_lifetime
    return 0.5 * x * x / (1.0 + x * x)


def simulate_nuclear_cooling(
    model: NVModel,
    config: CPTConfig,
    seed: int = 0,
    *,
    resonant_m_i: int = 0,
    n_cycles: int = 10_000,
    n_traj: int = 300,
    dark_excitation: float = 0.01,
    record_every: int | None = None,
) -> CoolingResult:
    """Monte Carlo of 14N polarization under a fixed two-photon-resonant field.

    The field is tuned so m_I = resonant_m_i is dark: that projection is
    excited only at the residual rate dark_excitation per cycle, while bright
    projections are excited every cycle.  Each excitation flips m_I with the
    hyperfine flip-flop probability, stepping +-1 with reflection at the
    |m_I| = 1 boundary, so population random-walks until it falls into the
    dark projection and stays.
    """
    if resonant_m_i not in (-1, 0, +1):
        raise InvalidParameterError(f"resonant_m_i must be -1, 0, or +1, got {resonant_m_i}")
    if not 0.0 <= dark_excitation <= 1.0:
        raise InvalidParameterError("dark_excitation must lie in [0, 1]")
    if n_cycles < 1 or n_traj < 1:
        raise InvalidParameterError("n_cycles and n_traj must be >= 1")
    p_flip = nuclear_flip_probability(config, model)
    every = record_every or max(1, n_cycles // 200)

    rng = np.random.default_rng(seed)
    m = rng.integers(-1, 2, size=n_traj)
    cycles = [0]
    pops = [[np.mean(m == v) for v in (-1, 0, +1)]]
    for cycle in range(1, n_cycles + 1):
        excite_prob = np.where(m == resonant_m_i, dark_excitation, 1.0)
        excited = rng.random(n_traj) < excite_prob
        flip = excited & (rng.random(n_traj) < p_flip)
        step = rng.integers(0, 2, size=n_traj) * 2 - 1
        proposed = m + np.where(flip, step, 0)
        # reflect off the spin-1 boundary: a flip from +-1 always lands on 0
        proposed = np.where(np.abs(proposed) > 1, m - np.where(flip, step, 0), proposed)
        m = proposed
        if cycle % every == 0 or cycle == n_cycles:
            cycles.append(cycle)
            pops.append([np.mean(m == v) for v in (-1, 0, +1)])
    return CoolingResult(
        cycles=np.array(cycles), populations=np.array(pops), resonant_m_i=resonant_m_i
    )


# ---------------------------------------------------------------------------
# carbon-13 bath preparation by conditional detection

@dataclass(frozen=True)
class BathConfig:
    """Overhauser-field preparation/readout settings.

    The 13C bath shifts the two-photon condition like a random field; its
    stationary spread is coupling_mhz * sqrt(n_carbon) / 2.  The dark
    resonance is modeled by its closed-form Lorentzian dip (dip_fwhm_mhz in
    two-photon detuning, depth dip_contrast) on a bright detected rate of
    bright_rate_per_ns; the full master-equation spectrum generator is
    cross-validated against this shape elsewhere.  The 14N projection is
    taken as polarized (single dip) during bath runs.
    """

    b_ro: tuple[float, ...]
    n_carbon: int = 50
    coupling_mhz: float = 0.4
    t1_nuc: float = 5e9
    b_prep: float = 0.0
    t_cond: float = 3e5
    n_cond: int = 0
    delay: float = 1e6
    readout_window: float = 3e5
    dip_fwhm_mhz: float = 1.0
    dip_contrast: float = 0.95
    bright_rate_per_ns: float = 1e-5

    def __post_init__(self) -> None:
        if self.n_carbon < 0:
            raise InvalidProtocolError(f"n_carbon must be >= 0, got {self.n_carbon}")
        if self.coupling_mhz < 0:
            raise InvalidProtocolError("coupling_mhz must be >= 0")
        if self.t1_nuc <= 0:
            raise InvalidProtocolError(f"t1_nuc must be > 0, got {self.t1_nuc}")
        if len(self.b_ro) == 0:
            raise InvalidProtocolError("b_ro axis is empty")
        if self.n_cond < 0:
            raise InvalidProtocolError("n_cond must be >= 0")
        if self.delay < 0 or self.readout_window <= 0:
            raise InvalidProtocolError("delay must be >= 0 and readout_window > 0")
        if self.dip_fwhm_mhz <= 0 or not 0.0 < self.dip_contrast <= 1.0:
            raise InvalidProtocolError("dip shape parameters out of range")
        if self.bright_rate_per_ns <= 0:
            raise InvalidProtocolError("bright_rate_per_ns must be > 0")

    @property
    def overhauser_std_mhz(self) -> float:
        return self.coupling_mhz * math.sqrt(self.n_carbon) / 2.0


def _dip_rate(delta2_mhz: np.ndarray, config: BathConfig) -> np.ndarray:
    """Detected rate (1/ns) vs two-photon detuning: Lorentzian dark dip."""
    hw2 = (config.dip_fwhm_mhz / 2.0) ** 2
    dip = hw2 / (delta2_mhz**2 + hw2)
    return config.bright_rate_per_ns * (1.0 - config.dip_contrast * dip)


def simulate_bath_preparation(
    config: BathConfig,
    model: NVModel,
    seed: int = 0,
    n_runs: int = 10_000,
) -> tuple[Spectrum, Spectrum]:
    """Prepare the 13C bath by zero-count selection, then read its spectrum.

    Each run draws an Overhauser shift, counts photons at the preparation
    field for t_cond, and is kept when the count is <= n_cond (a dark result
    heralds the bath near the two-photon resonance).  After an OU step over
    the readout delay the dip spectrum is accumulated versus b_ro, once for
    all runs and once for the kept subset.  Returns (unconditioned,
    conditioned) spectra.
    """
    if config.t_cond <= 0:
        raise InvalidProtocolError(
            "t_cond must be > 0 to condition on the preparation counts"
        )
    if n_runs < 1:
        raise InvalidProtocolError(f"n_runs must be >= 1, got {n_runs}")
    rng = np.random.default_rng(seed)
    axis = np.asarray(config.b_ro, dtype=float)
    zeeman = model.ground_params.zeeman_per_gauss
    sigma = config.overhauser_std_mhz

    b_ov = rng.normal(0.0, sigma, n_runs) if sigma > 0 else np.zeros(n_runs)
    delta2_prep = 2.0 * (zeeman * config.b_prep + b_ov)
    n_mean = _dip_rate(delta2_prep, config) * config.t_cond
    counts = rng.poisson(n_mean)
    keep = counts <= config.n_cond
    if not np.any(keep):
        raise NoSignalError(
            "no run passed the zero-count condition; loosen n_cond or shrink t_cond"
        )

    decay = math.exp(-config.delay / config.t1_nuc)
    b_ov_ro = decay * b_ov
    if sigma > 0:
        b_ov_ro = b_ov_ro + sigma * math.sqrt(1.0 - decay * decay) * rng.standard_normal(
            n_runs
        )

    delta2_ro = 2.0 * (zeeman * axis[None, :] + b_ov_ro[:, None])
    rates = _dip_rate(delta2_ro, config) * config.readout_window
    expected_all = rates.sum(axis=0)
    expected_kept = rates[keep].sum(axis=0)

    sampled_all = rng.poisson(expected_all).astype(np.int64)
    sampled_kept = rng.poisson(expected_kept).astype(np.int64)
    uncond = Spectrum(
        axis=axis, expected=expected_all, sampled=sampled_all, axis_label="field_gauss"
    )
    cond = Spectrum(
        axis=axis, expected=expected_kept, sampled=sampled_kept, axis_label="field_gauss"
    )
    return uncond, cond


__all__ = [
    "RATE_CALIBRATION",
    "cpt_linewidth",
    "CPTConfig",
    "simulate_cpt",
    "CoolingResult",
    "nuclear_flip_probability",
    "simulate_nuclear_cooling",
    "BathConfig",
    "simulate_bath_preparation",
]
