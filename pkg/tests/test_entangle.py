"""Heralded spin-photon correlation runs: mirrors, dilution budget, fidelity."""

import math

import numpy as np
import pytest

from nvsim.analysis import fit_oscillation
from nvsim.errors import InvalidParameterError, InvalidProtocolError
from nvsim.experiments.entangle import (
    EntanglementConfig,
    entangled_conditional_probability,
    fidelity_lower_bound,
    dilution_budget_config,
    simulate_entanglement_run,
)


IDEAL = dict(depolarization=0.0, phase_noise_std=0.0, jitter_std=0.0)


def test_conditional_probability_mirror_is_bit_exact():
    config = EntanglementConfig(phi_plus_minus=0.37)
    t = np.linspace(0.0, 20.0, 2001)
    p_h = entangled_conditional_probability("H", t, config)
    p_v = entangled_conditional_probability("V", t, config)
    # not merely close: the deviations from 1/2 are the same floats negated
    assert np.all((p_h - 0.5) == -(p_v - 0.5))
    assert isinstance(entangled_conditional_probability("H", 3.0, config), float)
    with pytest.raises(InvalidParameterError):
        entangled_conditional_probability("D", t, config)
    with pytest.raises(InvalidParameterError):
        entangled_conditional_probability("H", np.array([-1.0]), config)


def test_expected_curves_oscillate_pi_apart():
    config = EntanglementConfig(n_events=2000, **IDEAL)
    run = simulate_entanglement_run(config, seed=0)
    fit_h = fit_oscillation(run.bin_centers, run.expected["H"], expected_frequency_mhz=122.0)
    fit_v = fit_oscillation(run.bin_centers, run.expected["V"], expected_frequency_mhz=122.0)
    assert fit_h.params["frequency_mhz"] == pytest.approx(122.0, abs=1e-9)
    assert fit_v.params["frequency_mhz"] == pytest.approx(122.0, abs=1e-9)
    assert fit_h.params["visibility"] == pytest.approx(1.0, abs=1e-9)
    diff = abs(math.remainder(fit_h.params["phase"] - fit_v.params["phase"], 2 * math.pi))
    assert diff == pytest.approx(math.pi, abs=1e-7)
    np.testing.assert_allclose(run.expected["H"] + run.expected["V"], 1.0, atol=1e-15)


def test_ideal_run_reaches_full_visibility():
    config = EntanglementConfig(n_events=40_000, **IDEAL)
    run = simulate_entanglement_run(config, seed=1)
    assert run.channels == ("H", "V")
    assert sum(run.counts[c].sum() for c in run.channels) == 40_000
    # fit the raw event stream rather than binned means: averaging the fast
    # oscillation across a detection bin shaves a couple percent off the
    # contrast, while the per-event fit is unbiased
    channel = np.array([event.channel for event in run.record.events])
    outcome = run.spin_plus.astype(float)
    outcome = np.where(channel == "H", outcome, 1.0 - outcome)
    fit = fit_oscillation(run.record.times(), outcome, expected_frequency_mhz=122.0)
    assert fit.params["visibility"] == pytest.approx(1.0, abs=0.01)
    assert config.visibility_dilution == 1.0


def test_sigma_basis_ideal_correlations_are_exact():
    config = EntanglementConfig(basis="SIGMA", n_events=5000, **IDEAL)
    run = simulate_entanglement_run(config, seed=2)
    assert run.channels == ("sigma+", "sigma-")
    p1, p2 = run.sigma_correlations()
    assert p1 == 1.0
    assert p2 == 1.0
    with pytest.raises(InvalidProtocolError):
        simulate_entanglement_run(EntanglementConfig(n_events=100), seed=0).sigma_correlations()


def test_dilution_budget_stacks_multiplicatively():
    config = EntanglementConfig(
        depolarization=0.12,
        signal_to_background=9.0,
        phase_noise_std=0.67,
    )
    assert config.background_fraction == pytest.approx(0.1)
    expected = (1.0 - 0.12) * 0.9 * math.exp(-0.5 * 0.67**2)
    assert config.visibility_dilution == pytest.approx(expected, abs=1e-12)
    assert EntanglementConfig().background_fraction == 0.0


def test_depolarization_halves_the_expected_amplitude():
    half = EntanglementConfig(depolarization=0.5, n_events=1000, phase_noise_std=0.0)
    run = simulate_entanglement_run(half, seed=3)
    fit = fit_oscillation(run.bin_centers, run.expected["H"], expected_frequency_mhz=122.0)
    assert fit.params["visibility"] == pytest.approx(0.5, abs=1e-9)


def test_budget_fidelity_lands_in_band():
    hv = simulate_entanglement_run(dilution_budget_config("HV"), seed=4)
    good = np.isfinite(hv.observed["H"])
    fit = fit_oscillation(
        hv.bin_centers[good], hv.observed["H"][good], expected_frequency_mhz=122.0
    )
    sig = simulate_entanglement_run(dilution_budget_config("SIGMA"), seed=5)
    p1, p2 = sig.sigma_correlations()
    f_bound = fidelity_lower_bound(p1, p2, fit.params["visibility"])
    assert 0.62 <= f_bound <= 0.77


def test_fidelity_bound_endpoints_and_validation():
    assert fidelity_lower_bound(1.0, 1.0, 1.0) == pytest.approx(1.0)
    assert fidelity_lower_bound(1.0, 1.0, 0.0) == pytest.approx(0.5)
    assert fidelity_lower_bound(0.9, 0.9, 0.6) == pytest.approx(
        0.25 * 1.8 + 0.5 * 0.6 * 0.9
    )
    with pytest.raises(InvalidParameterError):
        fidelity_lower_bound(1.2, 0.9, 0.5)
    with pytest.raises(InvalidParameterError):
        fidelity_lower_bound(0.9, -0.1, 0.5)
    with pytest.raises(InvalidParameterError):
        fidelity_lower_bound(0.9, 0.9, 1.5)


def test_event_stream_reproducible_byte_for_byte():
    config = dilution_budget_config("HV", n_events=500)
    a = simulate_entanglement_run(config, seed=6)
    b = simulate_entanglement_run(config, seed=6)
    assert a.record.to_csv_text() == b.record.to_csv_text()
    np.testing.assert_array_equal(a.spin_plus, b.spin_plus)
    c = simulate_entanglement_run(config, seed=7)
    assert a.record.to_csv_text() != c.record.to_csv_text()


def test_run_bookkeeping():
    config = EntanglementConfig(n_events=200, window_ns=20.0, bin_ns=1.0)
    run = simulate_entanglement_run(config, seed=8)
    assert run.bin_centers.shape == (20,)
    times_h = run.channel_times("H")
    assert times_h.size == run.counts["H"].sum()
    assert np.all(times_h >= 0.0) and np.all(times_h < 20.0)
    empty = run.counts["H"] == 0
    assert np.all(np.isnan(run.observed["H"][empty]))
    finite = np.isfinite(run.observed["H"])
    assert np.all((run.observed["H"][finite] >= 0) & (run.observed["H"][finite] <= 1))


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(delta_omega=-1.0)
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(jitter_std=-0.1)
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(signal_to_background=0.0)
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(depolarization=1.5)
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(n_events=0)
    with pytest.raises(InvalidProtocolError):
        EntanglementConfig(basis="DA")
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(bin_ns=30.0, window_ns=20.0)
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(tau_ns=0.0)
    with pytest.raises(InvalidParameterError):
        EntanglementConfig(phase_noise_std=-1.0)
