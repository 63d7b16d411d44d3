"""Estimation layer: histograms, line fits, oscillation fits, scan statistics.

All fits share one damped Gauss-Newton core (Levenberg-style schedule:
damping x10 on a rejected step, /10 on an accepted one, at most 200
iterations, convergence when the relative residual change drops below
1e-10).  Parameter uncertainties come from the Jacobian covariance at the
optimum scaled by the residual variance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientSpanError,
    InvalidBinningError,
    InvalidDataError,
    NoSignalError,
)
from .records import Spectrum


# ---------------------------------------------------------------------------
# histogramming

@dataclass
class HistogramResult:
    counts: np.ndarray   # int64 per bin
    edges: np.ndarray    # n_bins + 1 boundaries
    dropped: int         # events outside [edges[0], edges[-1])

    @property
    def centers(self) -> np.ndarray:
        return (self.edges[:-1] + self.edges[1:]) / 2.0


def histogram(timestamps, bin_ns: float, window: tuple[float, float]) -> HistogramResult:
    """Left-closed fixed-width binning with an explicit drop count.

    Bin k covers [w0 + k*bin, w0 + (k+1)*bin); events on a boundary land in
    the higher bin.  The window is truncated to a whole number of bins and
    anything outside (including a partial tail) is dropped, so
    counts.sum() + dropped == len(timestamps) always.
    """
    if bin_ns <= 0:
        raise InvalidBinningError(f"bin width must be > 0, got {bin_ns}")
    w0, w1 = float(window[0]), float(window[1])
    if w1 <= w0:
        raise InvalidBinningError(f"window must be ordered, got ({w0}, {w1})")
    n_bins = int(math.floor((w1 - w0) / bin_ns + 1e-9))
    if n_bins < 1:
        raise InvalidBinningError(f"bin width {bin_ns} exceeds the window span {w1 - w0}")
    t = np.asarray(timestamps, dtype=float)
    counts = np.zeros(n_bins, dtype=np.int64)
    if t.size:
        idx = np.floor((t - w0) / bin_ns).astype(np.int64)
        inside = (idx >= 0) & (idx < n_bins)
        np.add.at(counts, idx[inside], 1)
    dropped = int(t.size - counts.sum())
    edges = w0 + bin_ns * np.arange(n_bins + 1)
    return HistogramResult(counts=counts, edges=edges, dropped=dropped)


# ---------------------------------------------------------------------------
# fit result container

@dataclass
class FitResult:
    params: dict[str, float]
    uncertainties: dict[str, float]
    residual_norm: float
    converged: bool
    n_iter: int
    model: str = "lorentzian"

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "uncertainties": {k: float(v) for k, v in self.uncertainties.items()},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "n_iter": int(self.n_iter),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.as_dict(), indent=indent)


# ---------------------------------------------------------------------------
# damped Gauss-Newton core

def _damped_least_squares(residual, jacobian, p0, max_iter: int = 200, rtol: float = 1e-10):
    """Minimize ||residual(p)||^2; returns (p, cov, cost, converged, n_iter)."""
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = cost == 0.0
    n_iter = 0
    while not converged and n_iter < max_iter:
        n_iter += 1
        jac = jacobian(p)
        grad = jac.T @ r
        hess = jac.T @ jac
        scale = np.maximum(np.diag(hess), 1e-12)
        stalled = False
        while True:
            try:
                step = np.linalg.solve(hess + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                p_try = p + step
                r_try = residual(p_try)
                cost_try = float(r_try @ r_try)
                if np.isfinite(cost_try) and cost_try <= cost:
                    rel = (cost - cost_try) / cost if cost > 0 else 0.0
                    p, r, cost = p_try, r_try, cost_try
                    lam = max(lam / 10.0, 1e-12)
                    if rel < rtol:
                        converged = True
                    break
            lam *= 10.0
            if lam > 1e12:
                stalled = True
                break
        if stalled:
            break

    jac = jacobian(p)
    dof = max(r.size - p.size, 1)
    sigma2 = cost / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * sigma2
    except np.linalg.LinAlgError:
        cov = np.full((p.size, p.size), np.nan)
    return p, cov, cost, converged, n_iter


# ---------------------------------------------------------------------------
# Lorentzian line fitting

def _lorentzian_model(x: np.ndarray, p: np.ndarray, n_peaks: int) -> np.ndarray:
    y = np.full_like(x, p[0])
    for k in range(n_peaks):
        c, fwhm, amp = p[1 + 3 * k : 4 + 3 * k]
        hw2 = (fwhm / 2.0) ** 2
        y = y + amp * hw2 / ((x - c) ** 2 + hw2)
    return y


def _lorentzian_jacobian(x: np.ndarray, p: np.ndarray, n_peaks: int) -> np.ndarray:
    jac = np.empty((x.size, 1 + 3 * n_peaks))
    jac[:, 0] = 1.0
    for k in range(n_peaks):
        c, fwhm, amp = p[1 + 3 * k : 4 + 3 * k]
        hw = fwhm / 2.0
        u = x - c
        denom = u * u + hw * hw
        jac[:, 1 + 3 * k] = amp * hw * hw * 2.0 * u / (denom * denom)
        jac[:, 2 + 3 * k] = amp * hw * u * u / (denom * denom)
        jac[:, 3 + 3 * k] = hw * hw / denom
    return jac


def _smooth(y: np.ndarray, width: int) -> np.ndarray:
    width = max(3, width) | 1
    kernel = np.ones(width) / width
    padded = np.concatenate([np.full(width // 2, y[0]), y, np.full(width // 2, y[-1])])
    return np.convolve(padded, kernel, mode="valid")


def _auto_peaks(x: np.ndarray, y: np.ndarray, n_peaks: int):
    """Initial (offset, [center, fwhm, amp] * n) from smoothed-derivative crossings."""
    offset = float(np.median(y))
    dev = y - offset
    smooth_dev = _smooth(dev, len(y) // 25)
    sign = 1.0 if smooth_dev.max() >= -smooth_dev.min() else -1.0
    smooth = sign * smooth_dev
    deriv = np.diff(smooth)
    candidates = [i for i in range(1, len(deriv)) if deriv[i - 1] > 0.0 >= deriv[i]]
    candidates.sort(key=lambda i: -smooth[i])

    min_sep = max(2, len(x) // (4 * n_peaks))
    chosen: list[int] = []
    for i in candidates:
        if all(abs(i - j) >= min_sep for j in chosen):
            chosen.append(i)
        if len(chosen) == n_peaks:
            break
    while len(chosen) < n_peaks:  # pad with spread-out positions
        frac = (len(chosen) + 1) / (n_peaks + 1)
        chosen.append(int(frac * (len(x) - 1)))

    dx = float(np.median(np.diff(x)))
    params = [offset]
    for i in sorted(chosen):
        # smoothed magnitude resists noise; raw dev would pick up single-bin spikes
        mag = float(smooth[i])
        half = mag / 2.0
        lo = i
        while lo > 0 and smooth[lo] > half:
            lo -= 1
        hi = i
        while hi < len(x) - 1 and smooth[hi] > half:
            hi += 1
        fwhm = max(abs(x[hi] - x[lo]), 2.0 * abs(dx))
        amp = sign * mag if mag > 0.0 else sign * max(abs(smooth).max(), 1e-12)
        params.extend([float(x[i]), fwhm, amp])
    return np.array(params)


def _coerce_xy(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, Spectrum):
        return data.axis.astype(float), data.sampled.astype(float)
    x, y = data
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def fit_lorentzian(data, n_peaks: int = 1, init: dict | None = None) -> FitResult:
    """Least-squares fit of n_peaks Lorentzians plus a constant offset.

    ``data`` is a Spectrum (its sampled counts are fitted) or an (x, y) pair.
    ``init`` may override auto-initialization with keys like "offset",
    "center_0", "fwhm_0", "amplitude_0".  Non-convergence is reported via the
    converged flag, never as an exception.
    """
    if n_peaks not in (1, 2, 3):
        raise InvalidDataError(f"n_peaks must be 1, 2, or 3, got {n_peaks}")
    x, y = _coerce_xy(data)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidDataError("x and y must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidDataError("fit input contains non-finite values")
    min_len = 3 * (3 * n_peaks + 1)
    if x.size < min_len:
        raise InvalidDataError(f"need at least {min_len} points for {n_peaks} peaks, got {x.size}")
    if np.ptp(x) == 0.0:
        raise InvalidDataError("degenerate axis: all x values equal")

    order = np.argsort(x)
    xs, ys = x[order], y[order]
    scale = max(float(np.ptp(ys)), 1e-300)

    p0 = _auto_peaks(xs, ys, n_peaks)
    if init:
        name_to_slot = {"offset": 0}
        for k in range(n_peaks):
            name_to_slot[f"center_{k}"] = 1 + 3 * k
            name_to_slot[f"fwhm_{k}"] = 2 + 3 * k
            name_to_slot[f"amplitude_{k}"] = 3 + 3 * k
        for name, value in init.items():
            if name not in name_to_slot:
                raise InvalidDataError(f"unknown init parameter {name!r}")
            p0[name_to_slot[name]] = float(value)

    flat = np.ptp(ys) <= 1e-12 * max(1.0, abs(float(np.median(ys))))
    if flat:
        p, cov, cost, converged, n_iter = p0, np.zeros((p0.size, p0.size)), float(
            np.sum((ys - p0[0]) ** 2)
        ), False, 0
    else:
        def residual(p):
            return _lorentzian_model(xs, p, n_peaks) - ys

        def jacobian(p):
            return _lorentzian_jacobian(xs, p, n_peaks)

        p, cov, cost, converged, n_iter = _damped_least_squares(residual, jacobian, p0)
        amps = [abs(p[3 + 3 * k]) for k in range(n_peaks)]
        if max(amps) < 1e-12 * scale:
            converged = False

    unc = np.sqrt(np.maximum(np.diag(cov), 0.0))
    peak_order = sorted(range(n_peaks), key=lambda k: p[1 + 3 * k])
    params = {"offset": float(p[0])}
    uncertainties = {"offset": float(unc[0])}
    for out_k, k in enumerate(peak_order):
        params[f"center_{out_k}"] = float(p[1 + 3 * k])
        params[f"fwhm_{out_k}"] = float(abs(p[2 + 3 * k]))
        params[f"amplitude_{out_k}"] = float(p[3 + 3 * k])
        uncertainties[f"center_{out_k}"] = float(unc[1 + 3 * k])
        uncertainties[f"fwhm_{out_k}"] = float(unc[2 + 3 * k])
        uncertainties[f"amplitude_{out_k}"] = float(unc[3 + 3 * k])
    return FitResult(
        params=params,
        uncertainties=uncertainties,
        residual_norm=math.sqrt(cost),
        converged=converged,
        n_iter=n_iter,
        model=f"lorentzian_{n_peaks}",
    )


# ---------------------------------------------------------------------------
# exponential tail fitting

def fit_exponential_decay(t, y, fit_offset: bool = True) -> FitResult:
    """Fit y = amplitude * exp(-t / tau) + offset."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.size < 4:
        raise InvalidDataError("need matching arrays with at least 4 points")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise InvalidDataError("fit input contains non-finite values")

    offset0 = float(y.min()) if fit_offset else 0.0
    amp0 = max(float(y.max() - offset0), 1e-300)
    body = y - offset0 > 0.05 * amp0
    if body.sum() >= 2:
        slope = np.polyfit(t[body], np.log(y[body] - offset0 + 1e-300), 1)[0]
        tau0 = -1.0 / slope if slope < 0 else float(np.ptp(t))
    else:
        tau0 = float(np.ptp(t)) / 2.0
    tau0 = max(tau0, 1e-9)

    if fit_offset:
        p0 = np.array([amp0, tau0, offset0])
    else:
        p0 = np.array([amp0, tau0])

    def model(p):
        out = p[0] * np.exp(-t / abs(p[1]))
        return out + p[2] if fit_offset else out

    def residual(p):
        return model(p) - y

    def jacobian(p):
        e = np.exp(-t / abs(p[1]))
        cols = [e, p[0] * e * t / (p[1] * abs(p[1]))]
        if fit_offset:
            cols.append(np.ones_like(t))
        return np.stack(cols, axis=1)

    p, cov, cost, converged, n_iter = _damped_least_squares(residual, jacobian, p0)
    unc = np.sqrt(np.maximum(np.diag(cov), 0.0))
    params = {"amplitude": float(p[0]), "tau": float(abs(p[1]))}
    uncertainties = {"amplitude": float(unc[0]), "tau": float(unc[1])}
    if fit_offset:
        params["offset"] = float(p[2])
        uncertainties["offset"] = float(unc[2])
    return FitResult(params, uncertainties, math.sqrt(cost), converged, n_iter, "exponential")


# ---------------------------------------------------------------------------
# oscillation / visibility fitting

def _oscillation_freq_guess(t: np.ndarray, p: np.ndarray) -> float:
    """Coarse frequency scan (MHz) of the strongest spectral component."""
    span = float(np.ptp(t))
    dt_min = float(np.min(np.diff(np.sort(t))))
    f_lo = 0.25e3 / span
    f_hi = 0.5e3 / max(dt_min, 1e-9)
    grid = np.linspace(f_lo, f_hi, 4000)
    dev = p - np.mean(p)
    # quadrature power at each trial frequency
    phases = 2.0e-3 * np.pi * np.outer(grid, t)
    power = (np.cos(phases) @ dev) ** 2 + (np.sin(phases) @ dev) ** 2
    return float(grid[int(np.argmax(power))])


def fit_oscillation(t_d, p, expected_frequency_mhz: float | None = None) -> FitResult:
    """Fit p(t) = (1 + V cos(2 pi f t + phi)) / 2 with V in [0, 1].

    Times in ns, frequency in MHz.  The visibility is parameterized as
    sin^2(u) so the bound is enforced by construction.  The data must span at
    least one period of the (expected or estimated) frequency.
    """
    t = np.asarray(t_d, dtype=float)
    y = np.asarray(p, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise InvalidDataError("t_d and p must be 1-d arrays of equal length")
    if t.size < 6:
        raise InsufficientSpanError(f"need at least 6 points, got {t.size}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise InvalidDataError("fit input contains non-finite values")

    f0 = expected_frequency_mhz if expected_frequency_mhz else _oscillation_freq_guess(t, y)
    if f0 <= 0:
        raise InvalidDataError(f"frequency reference must be positive, got {f0}")
    period_ns = 1.0e3 / f0
    if float(np.ptp(t)) < period_ns:
        raise InsufficientSpanError(
            f"data span {np.ptp(t):.3g} ns is below one period {period_ns:.3g} ns"
        )

    # linear quadrature solve for the initial visibility and phase
    w = 2.0e-3 * math.pi * f0
    design = np.stack([np.cos(w * t), np.sin(w * t)], axis=1)
    ab, *_ = np.linalg.lstsq(design, y - 0.5, rcond=None)
    v0 = min(2.0 * math.hypot(ab[0], ab[1]), 1.0)
    phi0 = math.atan2(-ab[1], ab[0])
    u0 = math.asin(math.sqrt(max(min(v0, 1.0), 0.0)))

    def unpack(q):
        u, f, phi = q
        return math.sin(u) ** 2, f, phi

    def residual(q):
        v, f, phi = unpack(q)
        arg = 2.0e-3 * np.pi * f * t + phi
        return 0.5 * (1.0 + v * np.cos(arg)) - y

    def jacobian(q):
        u, f, phi = q
        v = math.sin(u) ** 2
        arg = 2.0e-3 * np.pi * f * t + phi
        cosarg = np.cos(arg)
        sinarg = np.sin(arg)
        return np.stack(
            [
                0.5 * cosarg * math.sin(2.0 * u),
                -0.5 * v * sinarg * 2.0e-3 * np.pi * t,
                -0.5 * v * sinarg,
            ],
            axis=1,
        )

    q, cov, cost, converged, n_iter = _damped_least_squares(
        residual, jacobian, np.array([u0, f0, phi0])
    )
    v, f, phi = unpack(q)
    phi = math.remainder(phi, 2.0 * math.pi)
    unc = np.sqrt(np.maximum(np.diag(cov), 0.0))
    sigma_v = abs(math.sin(2.0 * q[0])) * unc[0]
    params = {"visibility": float(v), "frequency_mhz": float(f), "phase": float(phi)}
    uncertainties = {
        "visibility": float(sigma_v),
        "frequency_mhz": float(unc[1]),
        "phase": float(unc[2]),
    }
    return FitResult(params, uncertainties, math.sqrt(cost), converged, n_iter, "oscillation")


# ---------------------------------------------------------------------------
# cross-scan statistics

@dataclass
class ScanStatistics:
    centers: np.ndarray            # fitted center per scan, NaN where the fit failed
    jump_std: float                # std of successive center differences / sqrt(2)
    mean_single_scan_fwhm: float
    averaged_fwhm: float           # FWHM of the summed spectrum
    n_converged: int = 0
    fwhms: np.ndarray = field(default_factory=lambda: np.array([]))


def scan_statistics(axis, per_scan) -> ScanStatistics:
    """Center/width statistics over repeated scans of the same line.

    Fits one Lorentzian per scan row; the jump std estimator divides the
    std of first differences by sqrt(2) because each difference mixes two
    independent center errors/jumps.
    """
    axis = np.asarray(axis, dtype=float)
    rows = np.asarray(per_scan, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InvalidDataError(f"need a (n_scans >= 2, n_points) matrix, got {rows.shape}")
    if rows.shape[1] != axis.size:
        raise InvalidDataError("axis length does not match per_scan columns")

    span = float(np.ptp(axis))
    centers = np.full(rows.shape[0], np.nan)
    fwhms = np.full(rows.shape[0], np.nan)
    for k, row in enumerate(rows):
        try:
            fit = fit_lorentzian((axis, row), n_peaks=1)
        except InvalidDataError:
            continue
        c = fit.params["center_0"]
        w = fit.params["fwhm_0"]
        if fit.converged and axis.min() <= c <= axis.max() and 0.0 < w <= 2.0 * span:
            centers[k] = c
            fwhms[k] = w
    good = ~np.isnan(centers)
    n_conv = int(good.sum())
    if n_conv == 0:
        raise NoSignalError("no scan produced a converged line fit")

    diffs = []
    for k in range(len(centers) - 1):
        if good[k] and good[k + 1]:
            diffs.append(centers[k + 1] - centers[k])
    jump_std = float(np.std(diffs, ddof=1) / math.sqrt(2.0)) if len(diffs) >= 2 else float("nan")

    summed = rows.sum(axis=0)
    avg_fit = fit_lorentzian((axis, summed), n_peaks=1)
    averaged_fwhm = avg_fit.params["fwhm_0"] if avg_fit.converged else float("nan")
    return ScanStatistics(
        centers=centers,
        jump_std=jump_std,
        mean_single_scan_fwhm=float(np.nanmean(fwhms)),
        averaged_fwhm=float(averaged_fwhm),
        n_converged=n_conv,
        fwhms=fwhms,
    )


__all__ = [
    "HistogramResult",
    "histogram",
    "FitResult",
    "fit_lorentzian",
    "fit_exponential_decay",
    "fit_oscillation",
    "ScanStatistics",
    "scan_statistics",
]
