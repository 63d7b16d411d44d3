"""Spin-photon entanglement statistics.

One detection event = one photon routed to a polarization channel plus a
subsequent spin readout.  In the HV basis the heralded spin superposition
precesses at the ground-state splitting difference delta_omega, so the
conditional probability of the "+" spin outcome oscillates in the photon
detection time t_d; in the circular (SIGMA) basis the correlations are
time independent.  Imperfections: exponential emission-time envelope inside
a finite window, Gaussian detector jitter, state depolarization, uniform
background events, and a per-event Gaussian phase kick (phase_noise_std)
standing in for residual slow dephasing between herald and readout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidParameterError, InvalidProtocolError
from ..records import DetectionEvent, DetectionRecord

_CHANNELS = {"HV": ("H", "V"), "SIGMA": ("sigma+", "sigma-")}


@dataclass(frozen=True)
class EntanglementConfig:
    """Event-generation settings.

    delta_omega (MHz) is the frequency splitting of the two heralded spin
    components; phi_plus_minus their static phase offset.  Detection times
    live in [0, window_ns) and are histogrammed with bin_ns wide bins.
    signal_to_background may be inf (no background).
    """

    delta_omega: float = 122.0
    phi_plus_minus: float = 0.0
    jitter_std: float = 0.3
    signal_to_background: float = math.inf
    depolarization: float = 0.0
    n_events: int = 1000
    basis: str = "HV"
    window_ns: float = 20.0
    bin_ns: float = 1.0
    tau_ns: float = 12.2
    phase_noise_std: float = 0.0

    def __post_init__(self) -> None:
        if self.delta_omega < 0:
            raise InvalidParameterError(f"delta_omega must be >= 0, got {self.delta_omega}")
        if self.jitter_std < 0:
            raise InvalidParameterError(f"jitter_std must be >= 0, got {self.jitter_std}")
        if not self.signal_to_background > 0:
            raise InvalidParameterError("signal_to_background must be > 0 (inf allowed)")
        if not 0.0 <= self.depolarization <= 1.0:
            raise InvalidParameterError("depolarization must lie in [0, 1]")
        if self.n_events < 1:
            raise InvalidParameterError(f"n_events must be >= 1, got {self.n_events}")
        if self.basis not in _CHANNELS:
            raise InvalidProtocolError(f"basis must be HV or SIGMA, got {self.basis!r}")
        if self.window_ns <= 0 or self.tau_ns <= 0:
            raise InvalidParameterError("window_ns and tau_ns must be > 0")
        if not 0.0 < self.bin_ns <= self.window_ns:
            raise InvalidParameterError("bin_ns must lie in (0, window_ns]")
        if self.phase_noise_std < 0:
            raise InvalidParameterError("phase_noise_std must be >= 0")

    @property
    def background_fraction(self) -> float:
        if math.isinf(self.signal_to_background):
            return 0.0
        return 1.0 / (1.0 + self.signal_to_background)

    @property
    def visibility_dilution(self) -> float:
        """Oscillation contrast after depolarization, background, phase noise."""
        return (
            (1.0 - self.depolarization)
            * (1.0 - self.background_fraction)
            * math.exp(-0.5 * self.phase_noise_std**2)
        )


def _alpha(t_d: np.ndarray, config: EntanglementConfig) -> np.ndarray:
    return 2e-3 * math.pi * config.delta_omega * t_d + config.phi_plus_minus


def entangled_conditional_probability(basis: str, t_d, config: EntanglementConfig):
    """Ideal conditional probability of the "+" spin outcome given an H or V photon.

    p = (1 + cos alpha)/2 for H and (1 - cos alpha)/2 for V, with
    alpha = 2 pi delta_omega t_d + phi_plus_minus; no imperfections applied.
    """
    if basis not in ("H", "V"):
        raise InvalidParameterError(f"basis must be 'H' or 'V', got {basis!r}")
    t = np.asarray(t_d, dtype=float)
    if np.any(t < 0):
        raise InvalidParameterError("t_d must be >= 0")
    dev = 0.5 * np.cos(_alpha(t, config))
    # quantize through both sides' float grids so p_H - 0.5 and -(p_V - 0.5)
    # are bit-identical (the grids above and below 0.5 differ in spacing)
    dev = (0.5 + dev) - 0.5
    dev = -((0.5 - dev) - 0.5)
    p = 0.5 + dev if basis == "H" else 0.5 - dev
    return float(p) if np.isscalar(t_d) else p


@dataclass
class EntanglementRun:
    """One simulated detection run: the event stream plus binned curves.

    observed/expected/counts are keyed by channel name ("H"/"V" or
    "sigma+"/"sigma-").  observed holds per-bin empirical means of the "+"
    spin outcome (NaN where a bin has no events); expected holds the diluted
    model evaluated at bin centers.
    """

    config: EntanglementConfig
    record: DetectionRecord
    spin_plus: np.ndarray
    bin_centers: np.ndarray
    observed: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    @property
    def channels(self) -> tuple[str, str]:
        return _CHANNELS[self.config.basis]

    def channel_times(self, channel: str) -> np.ndarray:
        return np.array(
            [e.t_d_ns for e in self.record.events if e.channel == channel], dtype=float
        )

    def sigma_correlations(self) -> tuple[float, float]:
        """(P(+1 | sigma-), P(-1 | sigma+)) from the event stream."""
        if self.config.basis != "SIGMA":
            raise InvalidProtocolError("sigma correlations need a SIGMA-basis run")
        chan = np.array([e.channel for e in self.record.events])
        minus = chan == "sigma-"
        plus = chan == "sigma+"
        if not minus.any() or not plus.any():
            raise InvalidProtocolError("run contains no events in one sigma channel")
        p_plus_given_minus = float(np.mean(self.spin_plus[minus]))
        p_minus_given_plus = float(np.mean(~self.spin_plus[plus]))
        return p_plus_given_minus, p_minus_given_plus


def simulate_entanglement_run(config: EntanglementConfig, seed: int = 0) -> EntanglementRun:
    """Draw n_events herald/readout pairs and bin the conditional outcomes.

    Signal emission times follow an exponential of lifetime tau_ns truncated
    to the detection window (inverse-CDF sampling), then detector jitter is
    added and the result clamped to the window.  Background events are
    uniform in time, unpolarized, and spin-uncorrelated.  The draw order is
    fixed, so a seed pins the event stream byte for byte.
    """
    n = config.n_events
    rng = np.random.default_rng(seed)
    bg_frac = config.background_fraction

    is_bg = rng.random(n) < bg_frac
    u = rng.random(n)
    depth = 1.0 - math.exp(-config.window_ns / config.tau_ns)
    t_sig = -config.tau_ns * np.log1p(-u * depth)
    t_sig = t_sig + rng.normal(0.0, config.jitter_std, n) if config.jitter_std > 0 else t_sig
    t_bg = rng.random(n) * config.window_ns
    eps = 1e-9 * config.window_ns
    t_d = np.clip(np.where(is_bg, t_bg, t_sig), 0.0, config.window_ns - eps)

    phase_kick = (
        rng.normal(0.0, config.phase_noise_std, n)
        if config.phase_noise_std > 0
        else np.zeros(n)
    )
    first = rng.random(n) < 0.5  # H or sigma+; unconditioned marginal is 1/2

    d = config.depolarization
    if config.basis == "HV":
        contrast = np.where(is_bg, 0.0, 1.0 - d)
        sign = np.where(first, 1.0, -1.0)
        p_plus = 0.5 * (1.0 + sign * contrast * np.cos(_alpha(t_d, config) + phase_kick))
    else:
        # sigma- heralds ms=+1; depolarized state leaves 1 - d/2 correlation
        p_correct = np.where(is_bg, 0.5, 1.0 - d / 2.0)
        p_plus = np.where(first, 1.0 - p_correct, p_correct)
    spin_plus = rng.random(n) < p_plus

    names = _CHANNELS[config.basis]
    record = DetectionRecord()
    for i in range(n):
        record.append(
            DetectionEvent(
                event_id=i,
                channel=names[0] if first[i] else names[1],
                basis=config.basis,
                t_d_ns=float(t_d[i]),
            )
        )

    n_bins = max(1, int(math.floor(config.window_ns / config.bin_ns + 1e-9)))
    idx = np.minimum((t_d / config.bin_ns).astype(int), n_bins - 1)
    centers = (np.arange(n_bins) + 0.5) * config.bin_ns

    run = EntanglementRun(
        config=config, record=record, spin_plus=spin_plus, bin_centers=centers
    )
    dil = config.visibility_dilution
    flat = 0.5 * (1.0 - bg_frac) * (1.0 - d)
    for k, name in enumerate(names):
        in_chan = first if k == 0 else ~first
        cnt = np.bincount(idx[in_chan], minlength=n_bins).astype(np.int64)
        hits = np.bincount(idx[in_chan], weights=spin_plus[in_chan], minlength=n_bins)
        with np.errstate(invalid="ignore"):
            obs = np.where(cnt > 0, hits / np.maximum(cnt, 1), np.nan)
        run.counts[name] = cnt
        run.observed[name] = obs
        if config.basis == "HV":
            sgn = 1.0 if k == 0 else -1.0
            run.expected[name] = 0.5 * (1.0 + sgn * dil * np.cos(_alpha(centers, config)))
        else:
            base = 0.5 - flat if name == "sigma+" else 0.5 + flat
            run.expected[name] = np.full(n_bins, base)
    return run


def fidelity_lower_bound(
    p_plus_given_minus: float, p_minus_given_plus: float, visibility: float
) -> float:
    """Entanglement-fidelity lower bound from diagonal correlations and visibility.

    F >= (p1 + p2)/4 + (V/2) sqrt(p1 p2).  Perfect correlations give
    (1 + V)/2: 1 at full visibility, 0.5 at zero (the classical boundary).
    """
    for name, val in (
        ("p_plus_given_minus", p_plus_given_minus),
        ("p_minus_given_plus", p_minus_given_plus),
        ("visibility", visibility),
    ):
        if not 0.0 <= val <= 1.0:
            raise InvalidParameterError(f"{name} must lie in [0, 1], got {val}")
    pop = 0.25 * (p_plus_given_minus + p_minus_given_plus)
    coh = 0.5 * visibility * math.sqrt(p_plus_given_minus * p_minus_given_plus)
    return pop + coh


def dilution_budget_config(basis: str = "HV", n_events: int = 20_000) -> EntanglementConfig:
    """Imperfection budget sized to the measured-visibility regime.

    Depolarization 0.12 (state mixing), background fraction 0.1 (S/B = 9),
    0.3 ns jitter, and a 0.67 rad phase kick folding in the remaining
    dephasing contributions; together these put the fitted H/V visibility
    near 0.6 with sigma-basis correlations near 0.9.
    """
    return EntanglementConfig(
        depolarization=0.12,
        signal_to_background=9.0,
        jitter_std=0.3,
        phase_noise_std=0.67,
        n_events=n_events,
        basis=basis,
    )


__all__ = [
    "EntanglementConfig",
    "EntanglementRun",
    "entangled_conditional_probability",
    "simulate_entanglement_run",
    "fidelity_lower_bound",
    "dilution_budget_config",
]
