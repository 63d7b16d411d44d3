"""Static figure rendering for experiment outputs.

Everything here writes a PNG and closes the figure; the Agg backend is
forced so headless runs never touch a display.  Files are written through
a temp-and-rename so a crash mid-save cannot leave a truncated image.
"""
from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .levels import BASIS_LABELS, LevelSet  # noqa: E402
from .records import Spectrum  # noqa: E402

_DPI = 150


def _finish(fig, path: str) -> None:
    out_dir = os.path.dirname(os.path.abspath(path))
    os.makedirs(out_dir, exist_ok=True)
    fig.tight_layout()
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".png")
    try:
        with os.fdopen(fd, "wb") as handle:
            fig.savefig(handle, format="png", dpi=_DPI)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def save_spectrum_plot(spectrum: Spectrum, path: str, title: str = "") -> None:
    """Sampled counts as points over the noiseless expected curve."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(spectrum.axis, spectrum.sampled, ".", ms=4, color="0.35", label="sampled")
    ax.plot(spectrum.axis, spectrum.expected, color="C3", lw=1.6, label="expected")
    ax.set_xlabel(spectrum.axis_label.replace("_", " "))
    ax.set_ylabel("counts")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _finish(fig, path)


def save_histogram_plot(spectrum: Spectrum, path: str, title: str = "") -> None:
    """Arrival-time histogram: sampled as a step trace, expected overlaid."""
    fig, ax = plt.subplots(figsize=(7.5, 4.2))
    ax.step(
        spectrum.axis, spectrum.sampled, where="mid", color="0.35", lw=0.8,
        label="sampled",
    )
    ax.plot(spectrum.axis, spectrum.expected, color="C3", lw=1.4, label="expected")
    ax.set_xlabel("time (ns)")
    ax.set_ylabel("counts per bin")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _finish(fig, path)


def save_levels_plot(levels: LevelSet, path: str, title: str = "") -> None:
    """Energy-level diagram with each state tagged by its dominant character."""
    fig, ax = plt.subplots(figsize=(5.0, 5.5))
    for i, energy in enumerate(levels.energies):
        label = BASIS_LABELS[int(np.argmax(levels.characters[i]))]
        ax.hlines(energy / 1e3, 0.15, 0.75, color="C0", lw=2.0)
        ax.annotate(
            f"{label}  {energy:.1f} MHz",
            xy=(0.78, energy / 1e3),
            va="center",
            fontsize=9,
        )
    ax.set_xlim(0.0, 1.6)
    ax.set_xticks([])
    ax.set_ylabel("energy (GHz)")
    if title:
        ax.set_title(title)
    _finish(fig, path)


def save_cooling_plot(result, path: str, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for col, m_i in enumerate((-1, 0, +1)):
        style = "-" if m_i == result.resonant_m_i else "--"
        ax.plot(
            result.cycles, result.populations[:, col], style,
            label=f"$m_I = {m_i:+d}$" + (" (dark)" if m_i == result.resonant_m_i else ""),
        )
    ax.set_xlabel("optical cycle")
    ax.set_ylabel("population fraction")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _finish(fig, path)


def save_bath_plot(uncond: Spectrum, cond: Spectrum, path: str, title: str = "") -> None:
    """Unconditioned vs conditioned dip spectra, each normalized to its peak.

    Normalization removes the kept-fraction scale difference so the width
    narrowing is visible directly.
    """
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for spec, color, label in ((uncond, "0.35", "all runs"), (cond, "C3", "conditioned")):
        top = float(spec.expected.max()) or 1.0
        ax.plot(spec.axis, spec.sampled / top, ".", ms=4, color=color)
        ax.plot(spec.axis, spec.expected / top, color=color, lw=1.6, label=label)
    ax.set_xlabel("field (gauss)")
    ax.set_ylabel("normalized counts")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _finish(fig, path)


def save_entanglement_plot(run, path: str, title: str = "") -> None:
    """Per-channel conditional spin-flip curves vs detection time."""
    channels = run.channels
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0), sharey=True)
    for ax, channel in zip(axes, channels):
        obs = run.observed[channel]
        ok = np.isfinite(obs)
        ax.plot(run.bin_centers[ok], obs[ok], "o", ms=4, color="0.3", label="observed")
        ax.plot(run.bin_centers, run.expected[channel], color="C3", lw=1.5, label="expected")
        ax.set_title(channel)
        ax.set_xlabel("detection time (ns)")
        ax.set_ylim(-0.05, 1.05)
    axes[0].set_ylabel("P(spin +1 | detection)")
    axes[0].legend(frameon=False)
    if title:
        fig.suptitle(title)
    _finish(fig, path)


def save_fit_plot(
    x: np.ndarray,
    y: np.ndarray,
    y_fit: np.ndarray,
    path: str,
    title: str = "",
    xlabel: str = "x",
) -> None:
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(x, y, ".", ms=4, color="0.35", label="data")
    ax.plot(x, y_fit, color="C3", lw=1.6, label="fit")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _finish(fig, path)


__all__ = [
    "save_spectrum_plot",
    "save_histogram_plot",
    "save_levels_plot",
    "save_cooling_plot",
    "save_bath_plot",
    "save_entanglement_plot",
    "save_fit_plot",
]
