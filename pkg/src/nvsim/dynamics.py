"""Open-system dynamics of a 10-level NV model.

Level ordering is fixed as (g0, g+1, g-1, A1, A2, Ex, Ey, E1, E2, S): the
three ground spin projections, the six excited fine-structure states, and the
metastable singlet shelf.  Coherent couplings are specified as drives on
explicit level pairs; each drive carries a Rabi amplitude (MHz), a detuning
(MHz) relative to its nominal transition, and a pulse envelope.  The Lindblad
generator is built in a rotating frame solved per connected component of the
drive graph; Hamiltonian couplings between levels left in different frames
are dropped (secular approximation).

Unit conventions: energies and Rabi/detuning frequencies in MHz, times in ns.
The factor 2*pi*1e-3 converting MHz to rad/ns is applied only here, inside
the generator assembly.  Decay rates are 1/lifetime_ns (no 2*pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm, null_space

from .errors import (
    ContractViolationError,
    InvalidDriveError,
    InvalidModelError,
    InvalidParameterError,
    NonUniqueSteadyStateError,
    StiffnessError,
)
from .levels import (
    BASIS_LABELS,
    ExcitedStateParams,
    GroundParams,
    build_excited_hamiltonian,
    ground_levels,
)

LEVELS = ("g0", "g+1", "g-1", "A1", "A2", "Ex", "Ey", "E1", "E2", "S")
LEVEL_INDEX = {name: i for i, name in enumerate(LEVELS)}
GROUND_INDICES = (0, 1, 2)
EXCITED_INDICES = (3, 4, 5, 6, 7, 8)
SINGLET_INDEX = 9
_GROUND_BY_SPIN = {0: 0, +1: 1, -1: 2}

# rad/ns per MHz
OMEGA_PER_MHZ = 2.0e-3 * math.pi
# plain 1/ns per MHz, for incoherent rates quoted in MHz
RATE_PER_MHZ = 1.0e-3

# Default decay branching (rows g0, g+1, g-1, S) keyed by excited label.
# Ex/Ey cycle on m=0 with a small symmetric cross leak; A1 feeds the singlet;
# A2/E1/E2 split evenly over the +-1 manifold.
_DEFAULT_BRANCHING = {
    "A1": (0.0, 0.3, 0.3, 0.4),
    "A2": (0.0, 0.5, 0.5, 0.0),
    "Ex": None,  # filled from cross_leak_ey
    "Ey": None,
    "E1": (0.0, 0.5, 0.5, 0.0),
    "E2": (0.0, 0.5, 0.5, 0.0),
}


def level_index(level: int | str) -> int:
    """Resolve a level given as index or name."""
    if isinstance(level, str):
        try:
            return LEVEL_INDEX[level]
        except KeyError:
            raise InvalidDriveError(f"unknown level {level!r}; expected one of {LEVELS}") from None
    i = int(level)
    if not 0 <= i < 10:
        raise InvalidDriveError(f"level index {i} out of range 0..9")
    return i


@dataclass(frozen=True)
class Envelope:
    """Pulse envelope: rectangular with linear edge ramps, or CW.

    ``start=None`` means always on (CW).  A finite pulse ramps linearly from 0
    over ``rise`` ns starting at ``start``, holds at 1, and ramps back down
    starting at ``stop``.
    """

    start: float | None = None
    stop: float | None = None
    rise: float = 1.0

    def __post_init__(self) -> None:
        if self.rise < 0:
            raise InvalidParameterError(f"rise must be >= 0, got {self.rise}")
        if (self.start is None) != (self.stop is None):
            raise InvalidParameterError("start and stop must both be set or both None")
        if self.start is not None and self.stop < self.start:  # type: ignore[operator]
            raise InvalidParameterError("envelope times must be ordered: stop >= start")

    @property
    def is_cw(self) -> bool:
        return self.start is None

    def value(self, t: float) -> float:
        if self.start is None:
            return 1.0
        if t < self.start or t >= self.stop + self.rise:  # type: ignore[operator]
            return 0.0
        if self.rise == 0.0:
            return 1.0 if t < self.stop else 0.0  # type: ignore[operator]
        if t < self.start + self.rise:
            return (t - self.start) / self.rise
        if t < self.stop:  # type: ignore[operator]
            return 1.0
        return 1.0 - (t - self.stop) / self.rise  # type: ignore[operator]

    def breakpoints(self) -> tuple[float, ...]:
        if self.start is None:
            return ()
        if self.rise == 0.0:
            return (self.start, self.stop)  # type: ignore[return-value]
        return (self.start, self.start + self.rise, self.stop, self.stop + self.rise)  # type: ignore[misc]


@dataclass(frozen=True)
class Drive:
    """Coherent coupling applied to one or more level pairs by a single field.

    pairs    (lower, upper) level-index pairs sharing this field
    weights  complex amplitude weight per pair (unit dipole projection)
    rabi_mhz peak Rabi frequency in MHz (population oscillates at rabi_mhz)
    detuning_mhz  field frequency minus the nominal transition frequency;
             for multi-pair drives the reference is the mean of the pairs'
             nominal transitions
    """

    pairs: tuple[tuple[int, int], ...]
    rabi_mhz: float
    detuning_mhz: float = 0.0
    weights: tuple[complex, ...] = ()
    envelope: Envelope = field(default_factory=Envelope)

    def __post_init__(self) -> None:
        if not self.pairs:
            raise InvalidDriveError("drive needs at least one level pair")
        for lo, up in self.pairs:
            if lo == up:
                raise InvalidDriveError(f"degenerate drive pair ({lo}, {up})")
            if not (0 <= lo < 10 and 0 <= up < 10):
                raise InvalidDriveError(f"drive pair ({lo}, {up}) out of range")
        if not self.weights:
            object.__setattr__(self, "weights", tuple(1.0 + 0.0j for _ in self.pairs))
        elif len(self.weights) != len(self.pairs):
            raise InvalidDriveError("weights and pairs must have equal length")
        if self.rabi_mhz < 0:
            raise InvalidDriveError(f"rabi_mhz must be >= 0, got {self.rabi_mhz}")

    @property
    def levels(self) -> set[int]:
        return {i for pair in self.pairs for i in pair}


def optical_drive(
    ground_spin: int,
    excited: str | int,
    rabi_mhz: float,
    detuning_mhz: float = 0.0,
    envelope: Envelope | None = None,
) -> Drive:
    """Single optical transition drive from one ground spin projection."""
    if ground_spin not in _GROUND_BY_SPIN:
        raise InvalidDriveError(f"ground_spin must be one of -1, 0, +1, got {ground_spin}")
    up = level_index(excited)
    if up not in EXCITED_INDICES:
        raise InvalidDriveError(f"{excited!r} is not an excited level")
    return Drive(
        pairs=((_GROUND_BY_SPIN[ground_spin], up),),
        rabi_mhz=rabi_mhz,
        detuning_mhz=detuning_mhz,
        envelope=envelope or Envelope(),
    )


def lambda_drive(
    excited: str | int,
    rabi_mhz: float,
    detuning_mhz: float = 0.0,
    envelope: Envelope | None = None,
) -> Drive:
    """One linearly polarized field coupling both |+-1> grounds to one excited level.

    Weights are the x-polarized unit-dipole projections of the target state
    (equal magnitude 1/2, opposite sign for the antisymmetric combinations),
    so the configured rabi_mhz is the per-photon field strength and the dark
    state is an equal-weight ground superposition.
    """
    up = level_index(excited)
    label = LEVELS[up]
    if label not in ("A1", "A2", "E1", "E2"):
        raise InvalidDriveError(f"lambda drive requires a +-1-manifold excited state, got {label}")
    from .levels import _DIPOLE_TABLE  # unit dipole rows

    pairs = []
    weights = []
    for spin in (+1, -1):
        a_plus, a_minus = _DIPOLE_TABLE[label][spin]
        # projection of the dipole onto x-hat (circular components 1/sqrt2 each)
        w = np.conj(a_plus) / math.sqrt(2.0) + np.conj(a_minus) / math.sqrt(2.0)
        pairs.append((_GROUND_BY_SPIN[spin], up))
        weights.append(complex(w))
    return Drive(
        pairs=tuple(pairs),
        rabi_mhz=rabi_mhz,
        detuning_mhz=detuning_mhz,
        weights=tuple(weights),
        envelope=envelope or Envelope(),
    )


def microwave_drive(
    spin_a: int,
    spin_b: int,
    rabi_mhz: float,
    detuning_mhz: float = 0.0,
    envelope: Envelope | None = None,
) -> Drive:
    """Magnetic drive between two ground spin projections."""
    for s in (spin_a, spin_b):
        if s not in _GROUND_BY_SPIN:
            raise InvalidDriveError(f"ground spin must be one of -1, 0, +1, got {s}")
    if spin_a == spin_b:
        raise InvalidDriveError("microwave drive needs two distinct spins")
    lo, up = sorted((_GROUND_BY_SPIN[spin_a], _GROUND_BY_SPIN[spin_b]))
    return Drive(
        pairs=((lo, up),),
        rabi_mhz=rabi_mhz,
        detuning_mhz=detuning_mhz,
        envelope=envelope or Envelope(),
    )


@dataclass(frozen=True, eq=False)
class NVModel:
    """Complete 10-level rate/coherence model.

    branching rows are decay fractions of each excited state (A1..E2 order)
    into (g0, g+1, g-1, S); singlet_branching are the S decay fractions into
    the three grounds.  ground_mixing_rate (MHz) adds incoherent
    equalization among the ground spins (models off-resonant repumping or
    continuous microwave mixing).
    """

    excited_params: ExcitedStateParams
    ground_params: GroundParams
    excited_lifetime: float = 12.2
    singlet_lifetime: float = 300.0
    cross_leak_ey: float = 0.01
    branching: np.ndarray = None  # type: ignore[assignment]
    singlet_branching: tuple[float, float, float] = (1.0, 0.0, 0.0)
    ground_mixing_rate: float = 0.0

    @property
    def excited_decay_rate(self) -> float:
        """Total decay rate of each excited level, 1/ns."""
        return 1.0 / self.excited_lifetime


def _normalized_row(row, label: str) -> np.ndarray:
    arr = np.asarray(row, dtype=float)
    if arr.shape != (4,):
        raise InvalidModelError(f"branching row for {label} must have 4 entries, got {arr.shape}")
    if np.any(arr < 0):
        raise InvalidModelError(f"branching row for {label} has negative entries: {arr}")
    total = arr.sum()
    if total <= 0:
        raise InvalidModelError(f"branching row for {label} is not normalizable (sum 0)")
    return arr / total


def build_nv_model(
    excited: ExcitedStateParams | None = None,
    ground: GroundParams | None = None,
    *,
    excited_lifetime: float = 12.2,
    singlet_lifetime: float = 300.0,
    cross_leak_ey: float = 0.01,
    branching: dict[str, tuple[float, float, float, float]] | None = None,
    singlet_branching: tuple[float, float, float] = (1.0, 0.0, 0.0),
    ground_mixing_rate: float = 0.0,
) -> NVModel:
    """Assemble an NVModel with validated rates and normalized branching.

    ``branching`` overrides default rows per excited label; each row is the
    decay fraction into (g0, g+1, g-1, S) and is normalized here.  Defaults:
    Ex/Ey cycle on m=0 with total cross leak ``cross_leak_ey`` split evenly
    over +-1; A1 sends 40% to the singlet; A2/E1/E2 split evenly over +-1.
    """
    for name, val in (
        ("excited_lifetime", excited_lifetime),
        ("singlet_lifetime", singlet_lifetime),
    ):
        if val <= 0:
            raise InvalidModelError(f"{name} must be > 0, got {val}")
    if not 0.0 <= cross_leak_ey <= 1.0:
        raise InvalidModelError(f"cross_leak_ey must be in [0, 1], got {cross_leak_ey}")
    if ground_mixing_rate < 0:
        raise InvalidModelError(f"ground_mixing_rate must be >= 0, got {ground_mixing_rate}")

    cycling_row = (1.0 - cross_leak_ey, cross_leak_ey / 2.0, cross_leak_ey / 2.0, 0.0)
    rows = []
    overrides = branching or {}
    unknown = set(overrides) - set(BASIS_LABELS)
    if unknown:
        raise InvalidModelError(f"branching overrides for unknown levels: {sorted(unknown)}")
    for label in BASIS_LABELS:
        default = _DEFAULT_BRANCHING[label] or cycling_row
        rows.append(_normalized_row(overrides.get(label, default), label))
    sb = _normalized_row(tuple(singlet_branching) + (0.0,), "S")[:3]

    return NVModel(
        excited_params=excited or ExcitedStateParams(),
        ground_params=ground or GroundParams(),
        excited_lifetime=excited_lifetime,
        singlet_lifetime=singlet_lifetime,
        cross_leak_ey=cross_leak_ey,
        branching=np.vstack(rows),
        singlet_branching=tuple(sb),
        ground_mixing_rate=ground_mixing_rate,
    )


def basis_density(level: int | str, n_levels: int = 10) -> np.ndarray:
    """Density matrix for population entirely in one level."""
    i = level_index(level)
    rho = np.zeros((n_levels, n_levels), dtype=complex)
    rho[i, i] = 1.0
    return rho


def validate_density_matrix(
    rho: np.ndarray,
    *,
    herm_tol: float = 1e-9,
    trace_tol: float = 1e-7,
    eig_floor: float = -1e-7,
) -> None:
    """Raise ContractViolationError unless rho is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractViolationError(f"density matrix must be square, got shape {rho.shape}")
    if np.linalg.norm(rho - rho.conj().T) > herm_tol * max(1.0, np.linalg.norm(rho)):
        raise ContractViolationError("density matrix is not Hermitian within tolerance")
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > trace_tol:
        raise ContractViolationError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
    w = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
    if w.min() < eig_floor:
        raise ContractViolationError(f"negative eigenvalue {w.min():.3e} below floor")


def _nominal_energies(model: NVModel) -> np.ndarray:
    """Per-level nominal frequencies (MHz) at zero spectral-diffusion offset."""
    e = np.zeros(10)
    g0, gm, gp = ground_levels(model.ground_params)
    e[0], e[1], e[2] = g0, gp, gm  # order g0, g+1, g-1
    e[3:9] = np.diag(build_excited_hamiltonian(model.excited_params)).real
    e[SINGLET_INDEX] = 0.0
    return e


def _frame_frequencies(
    reference: np.ndarray, actual: np.ndarray, drives: tuple[Drive, ...]
) -> np.ndarray:
    """Solve rotating-frame frequencies from the drive graph.

    Field frequencies are set against the *reference* (unshifted) transition
    energies: each drive pins f_up - f_lo = reference_nominal + detuning for
    all its pairs (multi-pair reference is the mean nominal transition).
    Levels not reached by any drive rotate at their own actual frequency.
    Inconsistent cycles raise InvalidDriveError.
    """
    f = actual.copy()
    edges: list[tuple[int, int, float]] = []
    for d in drives:
        nominal = float(np.mean([reference[up] - reference[lo] for lo, up in d.pairs]))
        omega_l = nominal + d.detuning_mhz
        for lo, up in d.pairs:
            edges.append((lo, up, omega_l))

    adj: dict[int, list[tuple[int, float]]] = {}
    for lo, up, w in edges:
        adj.setdefault(lo, []).append((up, +w))
        adj.setdefault(up, []).append((lo, -w))

    seen: set[int] = set()
    for root in sorted(adj):
        if root in seen:
            continue
        f[root] = actual[root]
        stack = [root]
        seen.add(root)
        while stack:
            node = stack.pop()
            for nbr, w in adj[node]:
                target = f[node] + w
                if nbr in seen:
                    if abs(f[nbr] - target) > 1e-6:
                        raise InvalidDriveError(
                            "drive graph has an inconsistent cycle: level "
                            f"{LEVELS[nbr]} would need two frame frequencies "
                            f"({f[nbr]:.6f} vs {target:.6f} MHz)"
                        )
                    continue
                f[nbr] = target
                seen.add(nbr)
                stack.append(nbr)
    return f


def _decay_closure(levels_set: set[int], model: NVModel) -> tuple[int, ...]:
    """Extend a level subset so every included decay destination is present."""
    out = set(levels_set)
    changed = True
    while changed:
        changed = False
        for e_local, e_full in enumerate(EXCITED_INDICES):
            if e_full not in out:
                continue
            row = model.branching[e_local]
            for dest, fanout in zip((0, 1, 2, SINGLET_INDEX), row):
                if fanout > 0 and dest not in out:
                    out.add(dest)
                    changed = True
        if SINGLET_INDEX in out:
            for dest, fanout in zip((0, 1, 2), model.singlet_branching):
                if fanout > 0 and dest not in out:
                    out.add(dest)
                    changed = True
        if model.ground_mixing_rate > 0 and out & set(GROUND_INDICES):
            for g in GROUND_INDICES:
                if g not in out:
                    out.add(g)
                    changed = True
    return tuple(sorted(out))


@dataclass
class GeneratorParts:
    """Assembled generator pieces on a level subset (internal fast path)."""

    levels: tuple[int, ...]
    local_index: dict[int, int]
    l_static: np.ndarray                 # decay + static Hamiltonian superop
    drive_parts: list[tuple[Drive, np.ndarray]]  # per-drive Hamiltonian superop

    @property
    def dim(self) -> int:
        return len(self.levels)

    def combined(self) -> np.ndarray:
        """Full generator with every envelope at its plateau value."""
        total = self.l_static.copy()
        for _, part in self.drive_parts:
            total = total + part
        return total

    def excited_projector(self) -> np.ndarray:
        """Diagonal weights selecting excited-manifold population (vec space)."""
        n = self.dim
        w = np.zeros(n * n)
        for full, loc in self.local_index.items():
            if full in EXCITED_INDICES:
                w[loc * n + loc] = 1.0
        return w


def _hamiltonian_superop(h: np.ndarray) -> np.ndarray:
    n = h.shape[0]
    eye = np.eye(n)
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _dissipator(cops: list[np.ndarray]) -> np.ndarray:
    n = cops[0].shape[0] if cops else 0
    eye = np.eye(n)
    d = np.zeros((n * n, n * n), dtype=complex)
    for c in cops:
        cdc = c.conj().T @ c
        d += np.kron(c, c.conj())
        d -= 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
    return d


def assemble_generator(
    model: NVModel,
    drives: tuple[Drive, ...] | list[Drive] = (),
    detuning_offset: float = 0.0,
    subset: tuple[int, ...] | None = None,
) -> GeneratorParts:
    """Build the Lindblad generator pieces, optionally on a level subset.

    The subset is extended to its decay closure automatically.  Drives must
    target levels inside the (extended) subset.
    """
    drives = tuple(drives)
    if subset is None:
        levels_set = set(range(10))
    else:
        levels_set = set(subset)
        for d in drives:
            levels_set |= d.levels
    keep = _decay_closure(levels_set, model)
    loc = {full: i for i, full in enumerate(keep)}
    n = len(keep)

    reference = _nominal_energies(model)
    actual = reference.copy()
    actual[list(EXCITED_INDICES)] += detuning_offset
    frames = _frame_frequencies(reference, actual, drives)

    # Static Hamiltonian: frame-shifted diagonal plus excited-block couplings
    # that survive the secular filter (same frame frequency on both sides).
    h0 = np.zeros((n, n), dtype=complex)
    for full, i in loc.items():
        h0[i, i] = actual[full] - frames[full]
    hex_block = build_excited_hamiltonian(model.excited_params)
    for a_local, a_full in enumerate(EXCITED_INDICES):
        for b_local, b_full in enumerate(EXCITED_INDICES):
            if a_full >= b_full or a_full not in loc or b_full not in loc:
                continue
            coupling = hex_block[a_local, b_local]
            if coupling != 0 and abs(frames[a_full] - frames[b_full]) <= 1e-6:
                h0[loc[a_full], loc[b_full]] = coupling
                h0[loc[b_full], loc[a_full]] = np.conj(coupling)
    h0 *= OMEGA_PER_MHZ

    # Collapse operators.
    gamma_e = model.excited_decay_rate
    cops: list[np.ndarray] = []
    for e_local, e_full in enumerate(EXCITED_INDICES):
        if e_full not in loc:
            continue
        for dest, fanout in zip((0, 1, 2, SINGLET_INDEX), model.branching[e_local]):
            if fanout <= 0:
                continue
            c = np.zeros((n, n))
            c[loc[dest], loc[e_full]] = math.sqrt(gamma_e * fanout)
            cops.append(c)
    if SINGLET_INDEX in loc:
        gamma_s = 1.0 / model.singlet_lifetime
        for dest, fanout in zip((0, 1, 2), model.singlet_branching):
            if fanout <= 0:
                continue
            c = np.zeros((n, n))
            c[loc[dest], loc[SINGLET_INDEX]] = math.sqrt(gamma_s * fanout)
            cops.append(c)
    if model.ground_mixing_rate > 0:
        r = model.ground_mixing_rate * RATE_PER_MHZ
        for src in GROUND_INDICES:
            for dst in GROUND_INDICES:
                if src == dst or src not in loc or dst not in loc:
                    continue
                c = np.zeros((n, n))
                c[loc[dst], loc[src]] = math.sqrt(r)
                cops.append(c)

    l_static = _hamiltonian_superop(h0)
    if cops:
        l_static = l_static + _dissipator(cops)

    drive_parts: list[tuple[Drive, np.ndarray]] = []
    for d in drives:
        hd = np.zeros((n, n), dtype=complex)
        omega = d.rabi_mhz * OMEGA_PER_MHZ
        for (lo, up), w in zip(d.pairs, d.weights):
            if lo not in loc or up not in loc:
                raise InvalidDriveError(
                    f"drive pair ({LEVELS[lo]}, {LEVELS[up]}) outside the level subset"
                )
            hd[loc[up], loc[lo]] += 0.5 * omega * w
            hd[loc[lo], loc[up]] += 0.5 * omega * np.conj(w)
        drive_parts.append((d, _hamiltonian_superop(hd)))

    return GeneratorParts(levels=keep, local_index=loc, l_static=l_static, drive_parts=drive_parts)


def liouvillian(
    model: NVModel,
    drives: tuple[Drive, ...] | list[Drive] = (),
    detuning_offset: float = 0.0,
) -> np.ndarray:
    """Full 100x100 Lindblad superoperator (row-major vec convention).

    Drive envelopes are evaluated at their plateau (scale 1); time-dependent
    envelopes are handled inside ``evolve``.  ``detuning_offset`` shifts all
    excited levels rigidly (spectral diffusion of the optical gap).
    """
    return assemble_generator(model, drives, detuning_offset).combined()


@dataclass
class EvolveResult:
    """Sampled trajectory of the density matrix."""

    times: np.ndarray
    states: np.ndarray  # (n_samples, n, n)

    def populations(self, level: int | str) -> np.ndarray:
        i = level_index(level)
        return self.states[:, i, i].real


def _segment_edges(duration: float, drives: tuple[Drive, ...]) -> np.ndarray:
    pts = {0.0, float(duration)}
    for d in drives:
        for b in d.envelope.breakpoints():
            if 0.0 < b < duration:
                pts.add(float(b))
    return np.array(sorted(pts))


def evolve(
    model: NVModel,
    rho0: np.ndarray,
    duration: float,
    drives: tuple[Drive, ...] | list[Drive] = (),
    *,
    detuning_offset: float = 0.0,
    t_eval: np.ndarray | None = None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> EvolveResult:
    """Integrate the master equation with an adaptive embedded Runge-Kutta.

    Integration runs piecewise between envelope breakpoints.  Each returned
    sample is hermitized and passed through a trace guard: drift below 1e-7
    is renormalized away, anything larger raises StiffnessError.
    """
    if duration < 0:
        raise InvalidParameterError(f"duration must be >= 0, got {duration}")
    rho0 = np.asarray(rho0, dtype=complex)
    validate_density_matrix(rho0)
    drives = tuple(drives)
    parts = assemble_generator(model, drives, detuning_offset)
    if parts.dim != rho0.shape[0]:
        raise ContractViolationError(
            f"rho0 has dimension {rho0.shape[0]}, model generator has {parts.dim}"
        )

    if t_eval is None:
        t_eval = np.linspace(0.0, duration, 201) if duration > 0 else np.array([0.0])
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.size == 0 or t_eval[0] < 0 or t_eval[-1] > duration + 1e-12:
        raise InvalidParameterError("t_eval must lie inside [0, duration]")
    if np.any(np.diff(t_eval) < 0):
        raise InvalidParameterError("t_eval must be non-decreasing")

    l_static = parts.l_static
    env_parts = [(d.envelope, lp) for d, lp in parts.drive_parts]

    def rhs(t: float, v: np.ndarray) -> np.ndarray:
        out = l_static @ v
        for env, lp in env_parts:
            s = env.value(t)
            if s != 0.0:
                out += s * (lp @ v)
        return out

    edges = _segment_edges(duration, drives)
    v = rho0.reshape(-1)
    collected_t: list[float] = []
    collected_v: list[np.ndarray] = []
    if t_eval[0] == 0.0:
        collected_t.append(0.0)
        collected_v.append(v.copy())

    for a, b in zip(edges[:-1], edges[1:]):
        inside = t_eval[(t_eval > a + 1e-12) & (t_eval <= b + 1e-12)]
        sol = solve_ivp(
            rhs,
            (a, b),
            v,
            method="DOP853",
            t_eval=np.unique(np.concatenate([inside, [b]])),
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise StiffnessError(f"integrator failed on [{a}, {b}]: {sol.message}")
        for tk, vk in zip(sol.t, sol.y.T):
            if any(abs(tk - q) < 1e-9 for q in inside):
                collected_t.append(float(tk))
                collected_v.append(vk.copy())
        v = sol.y[:, -1].copy()

    n = parts.dim
    states = np.empty((len(collected_t), n, n), dtype=complex)
    for k, vk in enumerate(collected_v):
        rho = vk.reshape(n, n)
        rho = (rho + rho.conj().T) / 2.0
        tr = float(np.trace(rho).real)
        drift = abs(tr - 1.0)
        if drift >= 1e-7:
            raise StiffnessError(
                f"trace drift {drift:.3e} at t={collected_t[k]:.3f} ns exceeds the 1e-7 guard"
            )
        states[k] = rho / tr
    return EvolveResult(times=np.array(collected_t), states=states)


def steady_state(
    model: NVModel,
    drives: tuple[Drive, ...] | list[Drive] = (),
    detuning_offset: float = 0.0,
) -> np.ndarray:
    """Unique stationary density matrix of the (CW) generator.

    Raises NonUniqueSteadyStateError when the null space is degenerate, e.g.
    with no drives and no ground mixing (three disconnected ground states).
    """
    parts = assemble_generator(model, tuple(drives), detuning_offset)
    gen = parts.combined()
    ns = null_space(gen, rcond=1e-10)
    if ns.shape[1] != 1:
        raise NonUniqueSteadyStateError(
            f"generator null space has dimension {ns.shape[1]}, expected 1"
        )
    n = parts.dim
    rho = ns[:, 0].reshape(n, n)
    rho = (rho + rho.conj().T) / 2.0
    tr = float(np.trace(rho).real)
    if abs(tr) < 1e-12:
        raise NonUniqueSteadyStateError("null vector is traceless; no physical steady state")
    rho = rho / tr
    validate_density_matrix(rho, trace_tol=1e-9, eig_floor=-1e-7)
    return rho


def propagate_with_integral(
    generator: np.ndarray, rho_vec: np.ndarray, duration: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact (rho(T), integral_0^T rho dt) for a constant generator.

    Uses the block-matrix exponential [[L, I], [0, 0]]: the upper-right block
    of its exponential is the integrated propagator.
    """
    m = generator.shape[0]
    aug = np.zeros((2 * m, 2 * m), dtype=complex)
    aug[:m, :m] = generator * duration
    aug[:m, m:] = np.eye(m) * duration
    e = expm(aug)
    return e[:m, :m] @ rho_vec, e[:m, m:] @ rho_vec


def fluorescence_rate(rho: np.ndarray, model: NVModel, collection_eff: float = 1.0) -> float:
    """Detected photon rate (counts/s) from the excited-manifold population."""
    if not 0.0 <= collection_eff <= 1.0:
        raise InvalidParameterError(f"collection_eff must be in [0, 1], got {collection_eff}")
    rho = np.asarray(rho)
    if rho.shape[0] != 10:
        raise ContractViolationError("fluorescence_rate expects the full 10-level model")
    pop = sum(rho[i, i].real for i in EXCITED_INDICES)
    return collection_eff * pop / model.excited_lifetime * 1e9


@dataclass(frozen=True)
class NoiseProcess:
    """Spectral-diffusion process for the optical transition frequency.

    kind "ornstein_uhlenbeck": mean-reverting with ``correlation_time`` (ns)
    and stationary standard deviation ``stationary_std`` (MHz).
    kind "repump_jump": piecewise-constant; a fresh Gaussian draw with std
    ``stationary_std`` is taken at each repump event (protocol layers decide
    when repumps happen; a bare trace holds a single draw).
    """

    kind: str
    stationary_std: float
    correlation_time: float | None = None
    dipole_shift_coeff: float = 4000.0

    def __post_init__(self) -> None:
        if self.kind not in ("ornstein_uhlenbeck", "repump_jump"):
            raise InvalidParameterError(f"unknown noise kind {self.kind!r}")
        if self.stationary_std < 0:
            raise InvalidParameterError("stationary_std must be >= 0")
        if self.kind == "ornstein_uhlenbeck":
            if self.correlation_time is None or self.correlation_time <= 0:
                raise InvalidParameterError(
                    "ornstein_uhlenbeck needs a positive correlation_time"
                )

    @classmethod
    def from_field_noise(
        cls,
        kind: str,
        field_std_mv_per_m: float,
        correlation_time: float | None = None,
        dipole_shift_coeff: float = 4000.0,
    ) -> "NoiseProcess":
        """Build from electric-field noise via the linear Stark coefficient."""
        if field_std_mv_per_m < 0:
            raise InvalidParameterError("field_std_mv_per_m must be >= 0")
        return cls(
            kind=kind,
            stationary_std=field_std_mv_per_m * dipole_shift_coeff,
            correlation_time=correlation_time,
            dipole_shift_coeff=dipole_shift_coeff,
        )

    def ou_step_factor(self, dt: float) -> float:
        assert self.kind == "ornstein_uhlenbeck"
        return math.exp(-dt / self.correlation_time)  # type: ignore[operator]


def sample_noise(
    process: NoiseProcess, rng_seed: int, duration: float, dt: float
) -> np.ndarray:
    """Sample a detuning trace (MHz) on a uniform grid of spacing dt.

    The OU process uses its exact discrete update from a stationary initial
    draw.  The repump_jump process holds one draw for the whole trace.
    """
    if dt <= 0:
        raise InvalidParameterError(f"dt must be > 0, got {dt}")
    if duration < 0:
        raise InvalidParameterError(f"duration must be >= 0, got {duration}")
    n = int(math.floor(duration / dt + 1e-9)) + 1
    rng = np.random.default_rng(rng_seed)
    sigma = process.stationary_std
    if sigma == 0.0:
        return np.zeros(n)
    if process.kind == "repump_jump":
        return np.full(n, rng.normal(0.0, sigma))
    a = process.ou_step_factor(dt)
    kick = sigma * math.sqrt(1.0 - a * a)
    out = np.empty(n)
    out[0] = rng.normal(0.0, sigma)
    noise = rng.standard_normal(n - 1)
    for k in range(1, n):
        out[k] = a * out[k - 1] + kick * noise[k - 1]
    return out


def spawn_seeds(seed: int, count: int) -> list[np.random.SeedSequence]:
    """Deterministic per-trajectory seed splitting."""
    return np.random.SeedSequence(seed).spawn(count)


__all__ = [
    "LEVELS",
    "LEVEL_INDEX",
    "GROUND_INDICES",
    "EXCITED_INDICES",
    "SINGLET_INDEX",
    "OMEGA_PER_MHZ",
    "RATE_PER_MHZ",
    "Envelope",
    "Drive",
    "optical_drive",
    "lambda_drive",
    "microwave_drive",
    "NVModel",
    "build_nv_model",
    "basis_density",
    "validate_density_matrix",
    "assemble_generator",
    "GeneratorParts",
    "liouvillian",
    "evolve",
    "EvolveResult",
    "steady_state",
    "propagate_with_integral",
    "fluorescence_rate",
    "NoiseProcess",
    "sample_noise",
    "spawn_seeds",
    "level_index",
]
