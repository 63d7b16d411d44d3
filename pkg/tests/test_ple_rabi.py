"""Line-scan and pulsed-readout experiments against their analytic shapes."""

import numpy as np
import pytest

from nvsim.analysis import fit_exponential_decay, fit_lorentzian, scan_statistics
from nvsim.dynamics import NoiseProcess, build_nv_model
from nvsim.errors import (
    InvalidBinningError,
    InvalidCalibrationError,
    InvalidProtocolError,
)
from nvsim.experiments.ple import PLEProtocol, simulate_ple
from nvsim.experiments.rabi import (
    TCSPC_RESOLUTION_NS,
    readout_pulse,
    resonant_readout_population,
    simulate_rabi,
)


NATURAL_FWHM_MHZ = 1e3 / (2.0 * np.pi * 12.2)  # 13.05 for the 12.2 ns lifetime


# --------------------------------------------------------------------- ple


def test_ple_zero_noise_line_is_natural_width():
    model = build_nv_model()
    protocol = PLEProtocol(detunings_mhz=tuple(np.linspace(-40.0, 40.0, 81)))
    spec = simulate_ple(model, protocol, noise=None, seed=1)
    fit = fit_lorentzian((spec.axis, spec.expected))
    assert fit.converged
    assert fit.params["center_0"] == pytest.approx(0.0, abs=0.2)
    # weak probe: only a percent-level power broadening on top of 13.05
    assert fit.params["fwhm_0"] == pytest.approx(NATURAL_FWHM_MHZ, rel=0.08)
    assert spec.per_scan is None
    assert spec.axis_label == "detuning_mhz"


def test_ple_deterministic_and_linear_in_collection():
    model = build_nv_model()
    axis = tuple(np.linspace(-20.0, 20.0, 21))
    a = simulate_ple(model, PLEProtocol(detunings_mhz=axis), seed=7)
    b = simulate_ple(model, PLEProtocol(detunings_mhz=axis), seed=7)
    np.testing.assert_array_equal(a.sampled, b.sampled)
    np.testing.assert_array_equal(a.expected, b.expected)
    double = simulate_ple(
        model, PLEProtocol(detunings_mhz=axis, collection_eff=0.02), seed=7
    )
    np.testing.assert_allclose(double.expected, 2.0 * a.expected, rtol=1e-12)


def test_ple_repump_each_point_rebroadens_the_line():
    """Fresh jump draws every repetition smear the line by the jump width."""
    model = build_nv_model()
    axis = tuple(np.linspace(-150.0, 150.0, 121))
    noise = NoiseProcess("repump_jump", stationary_std=30.0)
    point_mode = simulate_ple(
        model, PLEProtocol(detunings_mhz=axis, mode="repump_each_point"), noise, seed=3
    )
    fit = fit_lorentzian((point_mode.axis, point_mode.expected))
    assert fit.params["fwhm_0"] > 40.0

    scan_mode = simulate_ple(
        model, PLEProtocol(detunings_mhz=axis, mode="repump_each_scan"), noise, seed=3
    )
    fit_scan = fit_lorentzian((scan_mode.axis, scan_mode.expected))
    # a single scan holds one draw: the line stays narrow, only displaced
    assert fit_scan.params["fwhm_0"] < 25.0


def test_ple_scan_mode_center_jumps_recoverable():
    model = build_nv_model()
    axis = tuple(np.linspace(-90.0, 90.0, 91))
    noise = NoiseProcess("repump_jump", stationary_std=20.0)
    protocol = PLEProtocol(
        detunings_mhz=axis,
        mode="repump_each_scan",
        n_scans=40,
        dwell=1e6,
        collection_eff=0.05,
    )
    spec = simulate_ple(model, protocol, noise, seed=11)
    assert spec.per_scan is not None
    assert spec.per_scan.shape == (40, 91)
    np.testing.assert_array_equal(
        spec.per_scan.sum(axis=0).astype(np.int64), spec.sampled
    )
    stats = scan_statistics(spec.axis, spec.per_scan)
    assert stats.n_converged > 30
    assert stats.jump_std == pytest.approx(20.0, rel=0.3)


def test_ple_ou_mode_runs_and_is_seeded():
    model = build_nv_model()
    axis = tuple(np.linspace(-30.0, 30.0, 31))
    noise = NoiseProcess("ornstein_uhlenbeck", stationary_std=5.0, correlation_time=5e4)
    a = simulate_ple(model, PLEProtocol(detunings_mhz=axis), noise, seed=2)
    b = simulate_ple(model, PLEProtocol(detunings_mhz=axis), noise, seed=2)
    np.testing.assert_array_equal(a.sampled, b.sampled)
    assert a.expected.shape == (31,)


def test_ple_protocol_validation():
    axis = (0.0, 1.0, 2.0)
    with pytest.raises(InvalidProtocolError):
        PLEProtocol(detunings_mhz=axis, mode="sweep")
    with pytest.raises(InvalidProtocolError):
        PLEProtocol(detunings_mhz=axis, dwell=0.0)
    with pytest.raises(InvalidProtocolError):
        PLEProtocol(detunings_mhz=())
    with pytest.raises(InvalidProtocolError):
        PLEProtocol(detunings_mhz=(0.0, 2.0, 1.0))
    with pytest.raises(InvalidProtocolError):
        PLEProtocol(detunings_mhz=axis, n_scans=0)
    with pytest.raises(InvalidProtocolError):
        PLEProtocol(detunings_mhz=axis, probe_rabi_mhz=0.0)
    with pytest.raises(InvalidProtocolError):
        PLEProtocol(detunings_mhz=axis, collection_eff=0.0)
    with pytest.raises(InvalidProtocolError):
        # one repump+probe cycle does not fit in the dwell
        PLEProtocol(detunings_mhz=axis, dwell=5e3, repump=1e3, probe=1e4)
    assert PLEProtocol(detunings_mhz=axis).n_reps == 181


# -------------------------------------------------------------------- rabi


def test_rabi_tail_decays_at_the_lifetime():
    model = build_nv_model()
    spec = simulate_rabi(model, readout_pulse(40.0), seed=5)
    assert spec.axis_label == "time_ns"
    tail = spec.axis > 95.0
    fit = fit_exponential_decay(spec.axis[tail], spec.expected[tail], fit_offset=False)
    assert fit.converged
    assert fit.params["tau"] == pytest.approx(12.2, rel=0.005)


def test_rabi_oscillation_frequency_in_pulse():
    # long pulse for a usable FFT resolution on the plateau
    model = build_nv_model()
    pulse = readout_pulse(40.0, start=10.0, stop=180.0)
    spec = simulate_rabi(model, pulse, seed=5)
    inside = (spec.axis > 12.0) & (spec.axis < 178.0)
    y = spec.expected[inside] - spec.expected[inside].mean()
    freqs = np.fft.rfftfreq(y.size, d=0.5) * 1e3  # MHz
    peak = freqs[np.argmax(np.abs(np.fft.rfft(y))[1:]) + 1]
    df = freqs[1] - freqs[0]
    assert abs(peak - 40.0) <= df


def test_rabi_deterministic_and_sized():
    model = build_nv_model()
    a = simulate_rabi(model, readout_pulse(30.0), seed=9)
    b = simulate_rabi(model, readout_pulse(30.0), seed=9)
    np.testing.assert_array_equal(a.sampled, b.sampled)
    assert a.axis.shape == (400,)
    assert a.expected.sum() > 1000.0  # detected counts at 1e6 shots, 1% efficiency


def test_rabi_jitter_smooths_but_conserves_counts():
    model = build_nv_model()
    sharp = simulate_rabi(model, readout_pulse(40.0), seed=4)
    soft = simulate_rabi(model, readout_pulse(40.0), seed=4, jitter_std_ns=2.0)
    assert soft.expected.max() < sharp.expected.max()
    assert soft.expected.sum() == pytest.approx(sharp.expected.sum(), rel=0.01)


def test_rabi_binning_contracts():
    model = build_nv_model()
    pulse = readout_pulse(20.0)
    with pytest.raises(InvalidBinningError):
        simulate_rabi(model, pulse, bin_ns=0.1)
    with pytest.raises(InvalidBinningError):
        simulate_rabi(model, pulse, window_ns=10.0, bin_ns=20.0)
    with pytest.raises(InvalidBinningError):
        simulate_rabi(model, pulse, n_shots=0)
    assert TCSPC_RESOLUTION_NS == 0.195


def test_readout_pulse_shape():
    pulse = readout_pulse(25.0, start=40.0, stop=80.0, rise=2.0)
    assert pulse.pairs == ((0, 6),)
    assert pulse.rabi_mhz == 25.0
    assert pulse.envelope.breakpoints() == (40.0, 42.0, 80.0, 82.0)


def test_resonant_readout_population_inversion():
    res = resonant_readout_population(55.0, c_m=100.0, c_b=10.0)
    assert res.value == pytest.approx(0.5)
    assert not res.clamped
    hi = resonant_readout_population(150.0, c_m=100.0, c_b=10.0)
    assert hi.value == 1.0 and hi.clamped
    lo = resonant_readout_population(5.0, c_m=100.0, c_b=10.0)
    assert lo.value == 0.0 and lo.clamped
    with pytest.raises(InvalidCalibrationError):
        resonant_readout_population(50.0, c_m=10.0, c_b=10.0)
