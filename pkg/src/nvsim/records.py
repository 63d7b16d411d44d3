"""Result containers and their CSV serialization.

The CSV dialect is fixed so golden-file comparisons are stable: comma
separator, ``.`` decimal point, one header row, LF line endings, floats
rendered with shortest round-trip repr.  Files are written atomically
(temporary file in the destination directory, then rename).
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, InvalidDataError


def _fmt(value) -> str:
    """Shortest round-trip decimal form of a float."""
    return repr(float(value))


def write_text_atomic(path: str, text: str) -> None:
    """Write text to path via a temp file and rename, never leaving partials."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Spectrum:
    """A scanned curve: axis values, noiseless expectation, and a shot-noise draw.

    axis is in MHz for laser/microwave scans and gauss for field scans; the
    axis_label records which.  per_scan optionally holds the single-scan rows
    (n_scans, n_points) that sum to the displayed spectrum.
    """

    axis: np.ndarray
    expected: np.ndarray
    sampled: np.ndarray
    per_scan: np.ndarray | None = None
    axis_label: str = "detuning_mhz"

    def __post_init__(self) -> None:
        self.axis = np.asarray(self.axis, dtype=float)
        self.expected = np.asarray(self.expected, dtype=float)
        sampled = np.asarray(self.sampled)
        if not (self.axis.shape == self.expected.shape == sampled.shape):
            raise ContractViolationError(
                f"axis/expected/sampled shapes differ: {self.axis.shape}, "
                f"{self.expected.shape}, {sampled.shape}"
            )
        if self.axis.ndim != 1:
            raise ContractViolationError("spectrum arrays must be 1-d")
        if np.any(self.expected < 0) or not np.all(np.isfinite(self.expected)):
            raise ContractViolationError("expected counts must be finite and >= 0")
        if np.any(sampled < 0) or np.any(sampled != np.floor(sampled)):
            raise ContractViolationError("sampled counts must be nonnegative integers")
        self.sampled = sampled.astype(np.int64)
        if self.per_scan is not None:
            self.per_scan = np.asarray(self.per_scan, dtype=float)
            if self.per_scan.ndim != 2 or self.per_scan.shape[1] != self.axis.size:
                raise ContractViolationError(
                    f"per_scan shape {self.per_scan.shape} does not match axis length "
                    f"{self.axis.size}"
                )

    def to_csv_text(self) -> str:
        lines = [f"{self.axis_label},expected,sampled"]
        for x, e, s in zip(self.axis, self.expected, self.sampled):
            lines.append(f"{_fmt(x)},{_fmt(e)},{int(s)}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str) -> None:
        write_text_atomic(path, self.to_csv_text())

    def per_scan_csv_text(self) -> str:
        if self.per_scan is None:
            raise InvalidDataError("spectrum has no per-scan data")
        n_scans = self.per_scan.shape[0]
        header = ",".join([self.axis_label] + [f"scan_{k}" for k in range(n_scans)])
        lines = [header]
        for j, x in enumerate(self.axis):
            row = [_fmt(x)] + [_fmt(v) for v in self.per_scan[:, j]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path: str) -> "Spectrum":
        with open(path, encoding="utf-8") as handle:
            lines = [ln for ln in handle.read().split("\n") if ln]
        if not lines:
            raise InvalidDataError(f"{path} is empty")
        header = lines[0].split(",")
        if len(header) != 3 or header[1] != "expected" or header[2] != "sampled":
            raise InvalidDataError(f"{path} is not a spectrum CSV (header {lines[0]!r})")
        data = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[1:]])
        if data.size == 0:
            raise InvalidDataError(f"{path} has a header but no rows")
        return cls(
            axis=data[:, 0], expected=data[:, 1], sampled=data[:, 2], axis_label=header[0]
        )


@dataclass(frozen=True)
class DetectionEvent:
    """One simulated photon detection: analyzer basis, detector channel, time."""

    event_id: int
    channel: str
    basis: str
    t_d_ns: float


@dataclass
class DetectionRecord:
    """Ordered stream of detection events from one protocol run."""

    events: list[DetectionEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def append(self, event: DetectionEvent) -> None:
        self.events.append(event)

    def times(self) -> np.ndarray:
        return np.array([e.t_d_ns for e in self.events], dtype=float)

    def to_csv_text(self) -> str:
        lines = ["event_id,channel,basis,t_d_ns"]
        for e in self.events:
            lines.append(f"{e.event_id},{e.channel},{e.basis},{_fmt(e.t_d_ns)}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str) -> None:
        write_text_atomic(path, self.to_csv_text())

    @classmethod
    def from_csv(cls, path: str) -> "DetectionRecord":
        with open(path, encoding="utf-8") as handle:
            lines = [ln for ln in handle.read().split("\n") if ln]
        if not lines or lines[0] != "event_id,channel,basis,t_d_ns":
            raise InvalidDataError(f"{path} is not a detection-record CSV")
        events = []
        for ln in lines[1:]:
            eid, channel, basis, t = ln.split(",")
            events.append(DetectionEvent(int(eid), channel, basis, float(t)))
        return cls(events=events)


def poisson_sample(expected: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shot-noise draw for an expected-counts curve."""
    expected = np.asarray(expected, dtype=float)
    if np.any(expected < 0):
        raise ContractViolationError("expected counts must be >= 0 for Poisson sampling")
    return rng.poisson(expected).astype(np.int64)


__all__ = [
    "Spectrum",
    "DetectionEvent",
    "DetectionRecord",
    "poisson_sample",
    "write_text_atomic",
]
