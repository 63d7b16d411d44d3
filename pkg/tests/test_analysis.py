"""Fitters and histogramming against synthetic data with known parameters."""

import math

import numpy as np
import pytest

from nvsim.analysis import (
    fit_exponential_decay,
    fit_lorentzian,
    fit_oscillation,
    histogram,
    scan_statistics,
)
from nvsim.errors import (
    InsufficientSpanError,
    InvalidBinningError,
    InvalidDataError,
    NoSignalError,
)
from nvsim.records import Spectrum


def lorentz(x, center, fwhm, amplitude, offset=0.0):
    hw = fwhm / 2.0
    return offset + amplitude * hw**2 / ((x - center) ** 2 + hw**2)


# ---------------------------------------------------------------- histogram


def test_histogram_exact_binning():
    events = [0.0, 0.999, 1.0, 5.0, -0.1, 10.0]
    h = histogram(events, 1.0, (0.0, 10.0))
    assert h.counts.shape == (10,)
    assert h.counts[0] == 2      # 0.0 and 0.999
    assert h.counts[1] == 1      # boundary event lands in the upper bin
    assert h.counts[5] == 1
    assert h.dropped == 2        # -0.1 below, 10.0 at the open right edge
    assert h.counts.sum() + h.dropped == len(events)
    np.testing.assert_allclose(h.centers, np.arange(10) + 0.5)


def test_histogram_truncates_partial_tail():
    h = histogram([10.2], 1.0, (0.0, 10.5))
    assert h.counts.shape == (10,)
    assert h.dropped == 1


def test_histogram_empty_input():
    h = histogram([], 0.5, (0.0, 5.0))
    assert h.counts.sum() == 0
    assert h.dropped == 0


def test_histogram_validation():
    with pytest.raises(InvalidBinningError):
        histogram([1.0], 0.0, (0.0, 10.0))
    with pytest.raises(InvalidBinningError):
        histogram([1.0], 1.0, (5.0, 5.0))
    with pytest.raises(InvalidBinningError):
        histogram([1.0], 20.0, (0.0, 10.0))


# --------------------------------------------------------------- lorentzian


def test_lorentzian_noiseless_recovery():
    x = np.linspace(-30.0, 30.0, 121)
    y = lorentz(x, center=2.0, fwhm=13.0, amplitude=80.0, offset=5.0)
    fit = fit_lorentzian((x, y))
    assert fit.converged
    assert fit.model == "lorentzian_1"
    assert fit.params["center_0"] == pytest.approx(2.0, abs=1e-8)
    assert fit.params["fwhm_0"] == pytest.approx(13.0, abs=1e-8)
    assert fit.params["amplitude_0"] == pytest.approx(80.0, abs=1e-7)
    assert fit.params["offset"] == pytest.approx(5.0, abs=1e-8)
    assert fit.residual_norm < 1e-6


def test_lorentzian_poisson_noise_recovery():
    rng = np.random.default_rng(5)
    x = np.linspace(-50.0, 50.0, 201)
    expected = lorentz(x, center=-4.0, fwhm=13.0, amplitude=120.0, offset=8.0)
    y = rng.poisson(expected).astype(float)
    fit = fit_lorentzian((x, y))
    assert fit.converged
    assert fit.params["center_0"] == pytest.approx(-4.0, abs=1.0)
    assert fit.params["fwhm_0"] == pytest.approx(13.0, rel=0.1)
    # covariance-based error bars are meaningful for counting noise
    assert 0.0 < fit.uncertainties["center_0"] < 1.0


def test_lorentzian_two_peaks_sorted_by_center():
    x = np.linspace(-40.0, 40.0, 241)
    y = lorentz(x, -12.0, 6.0, 50.0) + lorentz(x, 15.0, 9.0, 30.0) + 2.0
    fit = fit_lorentzian((x, y), n_peaks=2)
    assert fit.converged
    assert fit.params["center_0"] == pytest.approx(-12.0, abs=1e-6)
    assert fit.params["center_1"] == pytest.approx(15.0, abs=1e-6)
    assert fit.params["fwhm_1"] == pytest.approx(9.0, abs=1e-6)
    assert fit.params["center_0"] < fit.params["center_1"]


def test_lorentzian_init_override_and_unknown_key():
    x = np.linspace(-10.0, 10.0, 61)
    y = lorentz(x, 1.0, 3.0, 10.0)
    fit = fit_lorentzian((x, y), init={"center_0": 1.5, "fwhm_0": 2.0})
    assert fit.params["center_0"] == pytest.approx(1.0, abs=1e-7)
    with pytest.raises(InvalidDataError):
        fit_lorentzian((x, y), init={"sigma_0": 2.0})


def test_lorentzian_accepts_spectrum_sampled_counts():
    x = np.linspace(-20.0, 20.0, 81)
    expected = lorentz(x, 0.0, 10.0, 60.0, offset=4.0)
    sampled = np.random.default_rng(2).poisson(expected)
    spec = Spectrum(axis=x, expected=expected, sampled=sampled)
    fit = fit_lorentzian(spec)
    assert fit.converged
    assert fit.params["fwhm_0"] == pytest.approx(10.0, rel=0.2)


def test_lorentzian_flat_data_reports_non_convergence():
    x = np.linspace(0.0, 10.0, 40)
    fit = fit_lorentzian((x, np.full_like(x, 7.0)))
    assert not fit.converged


def test_lorentzian_validation():
    x = np.linspace(0.0, 1.0, 30)
    y = np.ones(30)
    with pytest.raises(InvalidDataError):
        fit_lorentzian((x, y), n_peaks=4)
    with pytest.raises(InvalidDataError):
        fit_lorentzian((x[:5], y[:5]))
    with pytest.raises(InvalidDataError):
        fit_lorentzian((x, np.r_[y[:-1], np.nan]))
    with pytest.raises(InvalidDataError):
        fit_lorentzian((np.zeros(30), y))
    with pytest.raises(InvalidDataError):
        fit_lorentzian((x, y[:-1]))


def test_fit_result_serialization():
    x = np.linspace(-10.0, 10.0, 61)
    fit = fit_lorentzian((x, lorentz(x, 0.0, 4.0, 20.0)))
    d = fit.as_dict()
    assert set(d) == {"model", "params", "uncertainties", "residual_norm", "converged", "n_iter"}
    assert isinstance(fit.to_json(), str)
    assert '"converged": true' in fit.to_json()


# -------------------------------------------------------------- exponential


def test_exponential_decay_noiseless_recovery():
    t = np.linspace(0.0, 80.0, 60)
    y = 140.0 * np.exp(-t / 12.2) + 6.0
    fit = fit_exponential_decay(t, y)
    assert fit.converged
    assert fit.params["tau"] == pytest.approx(12.2, abs=1e-7)
    assert fit.params["amplitude"] == pytest.approx(140.0, abs=1e-6)
    assert fit.params["offset"] == pytest.approx(6.0, abs=1e-7)


def test_exponential_decay_without_offset():
    t = np.linspace(0.0, 50.0, 40)
    y = 20.0 * np.exp(-t / 7.5)
    fit = fit_exponential_decay(t, y, fit_offset=False)
    assert fit.params["tau"] == pytest.approx(7.5, abs=1e-8)
    assert "offset" not in fit.params
    assert fit.model == "exponential"


def test_exponential_decay_validation():
    with pytest.raises(InvalidDataError):
        fit_exponential_decay([0.0, 1.0, 2.0], [3.0, 2.0, 1.0])
    with pytest.raises(InvalidDataError):
        fit_exponential_decay([0.0, 1.0, 2.0, 3.0], [3.0, 2.0, np.inf, 1.0])


# -------------------------------------------------------------- oscillation


def test_oscillation_noiseless_recovery():
    t = np.linspace(0.0, 600.0, 120)
    v, f, phi = 0.8, 5.0, 0.4
    y = 0.5 * (1.0 + v * np.cos(2e-3 * np.pi * f * t + phi))
    fit = fit_oscillation(t, y)
    assert fit.converged
    assert fit.params["visibility"] == pytest.approx(v, abs=1e-8)
    assert fit.params["frequency_mhz"] == pytest.approx(f, abs=1e-8)
    assert fit.params["phase"] == pytest.approx(phi, abs=1e-7)
    assert fit.model == "oscillation"


def test_oscillation_visibility_stays_bounded():
    # data with apparent contrast above 1 still fits inside the physical box
    t = np.linspace(0.0, 400.0, 90)
    y = 0.5 * (1.0 + 1.4 * np.cos(2e-3 * np.pi * 4.0 * t))
    fit = fit_oscillation(t, y, expected_frequency_mhz=4.0)
    assert fit.params["visibility"] <= 1.0 + 1e-12
    assert fit.params["visibility"] > 0.98


def test_oscillation_uses_frequency_hint():
    t = np.linspace(0.0, 500.0, 80)
    y = 0.5 * (1.0 + 0.4 * np.cos(2e-3 * np.pi * 8.0 * t - 1.0))
    fit = fit_oscillation(t, y, expected_frequency_mhz=8.2)
    assert fit.params["frequency_mhz"] == pytest.approx(8.0, abs=1e-6)
    # phase reported on the principal branch
    assert -math.pi <= fit.params["phase"] <= math.pi


def test_oscillation_span_contracts():
    with pytest.raises(InsufficientSpanError):
        fit_oscillation([0.0, 1.0, 2.0, 3.0, 4.0], [0.5] * 5)
    t = np.linspace(0.0, 50.0, 20)  # half a period at 10 MHz
    y = 0.5 * (1.0 + 0.5 * np.cos(2e-3 * np.pi * 10.0 * t))
    with pytest.raises(InsufficientSpanError):
        fit_oscillation(t, y, expected_frequency_mhz=10.0)
    with pytest.raises(InvalidDataError):
        fit_oscillation(t, y, expected_frequency_mhz=-3.0)
    with pytest.raises(InvalidDataError):
        fit_oscillation(t, np.r_[y[:-1], np.nan], expected_frequency_mhz=10.0)


# --------------------------------------------------------------- scan stats


def test_scan_statistics_recovers_jump_std():
    rng = np.random.default_rng(9)
    axis = np.linspace(-600.0, 600.0, 241)
    sigma = 150.0
    centers = rng.normal(0.0, sigma, size=120)
    rows = np.stack([lorentz(axis, c, 13.0, 400.0, offset=1.0) for c in centers])
    stats = scan_statistics(axis, rows)
    assert stats.n_converged == 120
    assert stats.jump_std == pytest.approx(sigma, rel=0.2)
    assert stats.mean_single_scan_fwhm == pytest.approx(13.0, rel=0.05)
    # the summed line is inhomogeneously broadened far past a single scan
    assert stats.averaged_fwhm > 5.0 * stats.mean_single_scan_fwhm


def test_scan_statistics_validation():
    axis = np.linspace(-5.0, 5.0, 50)
    row = lorentz(axis, 0.0, 2.0, 30.0)
    with pytest.raises(InvalidDataError):
        scan_statistics(axis, row[None, :])
    with pytest.raises(InvalidDataError):
        scan_statistics(axis, np.ones((3, 7)))
    with pytest.raises(NoSignalError):
        scan_statistics(axis, np.zeros((4, 50)))
