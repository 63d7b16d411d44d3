"""Excited-state fine structure of the NV center and optical selection rules.

Everything here is stationary structure: the 6x6 excited-state Hamiltonian
(spin-orbit + spin-spin + transverse strain) in the basis
(A1, A2, Ex, Ey, E1, E2), its eigensystem, the polarization of each optical
transition to the spin-triplet ground state, and the ground-state Zeeman
levels. Energies are in MHz throughout; strain enters as the two transverse
components (delta_1, delta_2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InvalidParameterError

BASIS_LABELS = ("A1", "A2", "Ex", "Ey", "E1", "E2")

# Inverse of the root-2 normalization shared by all circular dipole entries.
_SQ2 = 1.0 / np.sqrt(2.0)

#: Circular amplitude components (sigma_plus, sigma_minus) of the unit dipole
#: connecting each excited basis state to each ground spin projection, derived
#: from the orbital structure of the basis states.  Rows are basis states,
#: keys are ground m_s.  Linear x/y polarizations are expressed in the same
#: circular components (x = (s+ + s-)/sqrt2, y = -i(s+ - s-)/sqrt2).  Each
#: row has unit total squared amplitude over ground spins, which makes the
#: summed transition strength of any eigenstate strain-independent.
_DIPOLE_TABLE: dict[str, dict[int, tuple[complex, complex]]] = {
    "A1": {-1: (+_SQ2, 0.0), +1: (0.0, +_SQ2)},
    "A2": {-1: (-_SQ2, 0.0), +1: (0.0, +_SQ2)},
    "Ex": {0: (-1j * _SQ2, +1j * _SQ2)},  # y-polarized
    "Ey": {0: (+_SQ2, +_SQ2)},            # x-polarized
    "E1": {-1: (0.0, +_SQ2), +1: (+_SQ2, 0.0)},
    "E2": {-1: (0.0, +_SQ2), +1: (-_SQ2, 0.0)},
}

#: Representative spin-conserving transition for each excited basis state:
#: the m_s=0 states pair with the m=0 ground level, the +-1-manifold states
#: with the ground level they reach by sigma+ emission.  Used only for the
#: direct/cross labels in ``transition_map``.
_DIRECT_PARTNER = {"A1": -1, "A2": -1, "Ex": 0, "Ey": 0, "E1": +1, "E2": +1}


@dataclass(frozen=True)
class ExcitedStateParams:
    """Parameters of the excited-state fine-structure Hamiltonian (MHz).

    lambda_z     axial spin-orbit splitting; the (A1,A2) and (E1,E2) pair
                 centroids sit 2*lambda_z apart.
    delta        axial spin-spin parameter; (Ex,Ey) sit at -2*delta.
    delta_prime  spin-spin splitting between A2 and A1 (gap = 2*delta_prime).
    delta_dprime spin-spin coupling between the m_s=0 and +-1 branches.
    strain_d1, strain_d2
                 transverse strain components.
    """

    lambda_z: float = 2750.0
    delta: float = 1420.0 / 3.0
    delta_prime: float = 1550.0
    delta_dprime: float = 200.0
    strain_d1: float = 0.0
    strain_d2: float = 0.0

    def __post_init__(self) -> None:
        for name in ("lambda_z", "delta", "delta_prime"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class GroundParams:
    """Ground-state spin-triplet parameters.

    d_gs: zero-field splitting (MHz); zeeman_per_gauss: linear Zeeman shift of
    the m_s=+-1 levels (MHz/G); b_field: axial field (gauss).
    """

    d_gs: float = 2880.0
    zeeman_per_gauss: float = 2.8
    b_field: float = 0.0

    def __post_init__(self) -> None:
        if self.d_gs <= 0:
            raise InvalidParameterError(f"d_gs must be > 0, got {self.d_gs}")
        if self.zeeman_per_gauss <= 0:
            raise InvalidParameterError(
                f"zeeman_per_gauss must be > 0, got {self.zeeman_per_gauss}"
            )


@dataclass(frozen=True)
class LevelSet:
    """Eigensystem of the excited-state Hamiltonian.

    energies:   ascending eigenvalues (MHz), degenerate pairs ordered by
                descending |A2| character, then descending |Ex| character.
    states:     states[:, i] is the eigenvector of energies[i] in the
                (A1, A2, Ex, Ey, E1, E2) basis.
    characters: characters[i, b] = |<basis_b|state_i>|^2.
    """

    energies: np.ndarray
    states: np.ndarray
    characters: np.ndarray

    def dominant_label(self, i: int) -> str:
        """Basis label carrying the largest weight in eigenstate ``i``."""
        return BASIS_LABELS[int(np.argmax(self.characters[i]))]

    def index_of(self, label: str) -> int:
        """Index of the eigenstate dominated by ``label``."""
        b = BASIS_LABELS.index(label)
        return int(np.argmax(self.characters[:, b]))


@dataclass(frozen=True)
class TransitionDipole:
    """Optical transition amplitude between one eigenstate and one ground spin.

    sigma_plus/sigma_minus are the circular amplitude components; ellipticity
    is 0 for pure circular, 1 for pure linear (2*min/(sum) of the circular
    magnitudes), and 0 by convention for forbidden (zero-amplitude) pairs.
    """

    ground_spin: int
    excited_index: int
    sigma_plus: complex
    sigma_minus: complex
    ellipticity: float

    @property
    def amplitude_norm(self) -> float:
        return float(np.hypot(abs(self.sigma_plus), abs(self.sigma_minus)))

    @property
    def linear_x(self) -> complex:
        return (self.sigma_plus + self.sigma_minus) * _SQ2

    @property
    def linear_y(self) -> complex:
        return 1j * (self.sigma_plus - self.sigma_minus) * _SQ2


@dataclass(frozen=True)
class TransitionEntry:
    """One row of the optical transition table."""

    ground_spin: int
    excited_index: int
    offset_mhz: float
    label: str  # "direct" or "cross"
    dipole: TransitionDipole


def build_excited_hamiltonian(params: ExcitedStateParams) -> np.ndarray:
    """Assemble the 6x6 excited-state Hamiltonian (MHz) in the fixed basis."""
    lz = params.lambda_z
    d = params.delta
    dp = params.delta_prime
    dpp = params.delta_dprime
    d1 = params.strain_d1
    d2 = params.strain_d2
    h = np.array(
        [
            [d - dp + lz, 0, 0, 0, d1, -1j * d2],
            [0, d + dp + lz, 0, 0, 1j * d2, -d1],
            [0, 0, -2 * d + d1, d2, 0, 1j * dpp],
            [0, 0, d2, -2 * d - d1, dpp, 0],
            [d1, -1j * d2, 0, dpp, d - lz, 0],
            [1j * d2, -d1, -1j * dpp, 0, 0, d - lz],
        ],
        dtype=complex,
    )
    return h


def eigensystem(hamiltonian: np.ndarray) -> LevelSet:
    """Diagonalize a 6x6 Hermitian Hamiltonian with deterministic ordering.

    Eigenvalues ascend; within a degenerate cluster states are ordered by
    descending |A2| character, then descending |Ex| character (further basis
    characters break any remaining ties).  Raises ContractViolationError if
    the input is not Hermitian to 1e-9 (relative) or if the reconstruction
    residual exceeds 1e-6 * ||H||.
    """
    h = np.asarray(hamiltonian, dtype=complex)
    if h.shape != (6, 6):
        raise ContractViolationError(f"expected a 6x6 matrix, got shape {h.shape}")
    scale = max(1.0, float(np.linalg.norm(h)))
    if np.linalg.norm(h - h.conj().T) > 1e-9 * scale:
        raise ContractViolationError("matrix is not Hermitian within 1e-9 relative tolerance")

    energies, states = np.linalg.eigh(h)
    characters = np.abs(states.T) ** 2

    # Deterministic order inside degenerate clusters: sort keys are the
    # characters in priority order A2, Ex, then the remaining basis states.
    priority = [BASIS_LABELS.index(b) for b in ("A2", "Ex", "A1", "Ey", "E1", "E2")]
    order = list(range(6))
    tol = 1e-6 * scale
    i = 0
    while i < 6:
        j = i + 1
        while j < 6 and energies[order[j]] - energies[order[i]] <= tol:
            j += 1
        if j - i > 1:
            cluster = order[i:j]
            cluster.sort(key=lambda k: tuple(-characters[k, b] for b in priority))
            order[i:j] = cluster
        i = j

    energies = energies[order]
    states = states[:, order]
    characters = characters[order, :]

    resid = np.linalg.norm(h @ states - states * energies)
    if resid > 1e-6 * scale:
        raise ContractViolationError(f"eigensystem reconstruction residual {resid:.3e}")
    return LevelSet(energies=energies, states=states, characters=characters)


def solve_levels(params: ExcitedStateParams) -> LevelSet:
    """Convenience wrapper: Hamiltonian assembly followed by diagonalization."""
    return eigensystem(build_excited_hamiltonian(params))


def state_character(levels: LevelSet, basis_label: str) -> np.ndarray:
    """Per-eigenstate weight |<basis_label|state_i>|^2 as a length-6 array."""
    if basis_label not in BASIS_LABELS:
        raise InvalidParameterError(
            f"unknown basis label {basis_label!r}; expected one of {BASIS_LABELS}"
        )
    return levels.characters[:, BASIS_LABELS.index(basis_label)].copy()


def _ellipticity(a_plus: complex, a_minus: complex) -> float:
    m_lo = min(abs(a_plus), abs(a_minus))
    m_hi = max(abs(a_plus), abs(a_minus))
    if m_lo + m_hi == 0.0:
        return 0.0
    return 2.0 * m_lo / (m_lo + m_hi)


def transition_dipoles(levels: LevelSet) -> list[TransitionDipole]:
    """Transition amplitudes for every (ground spin, eigenstate) pair.

    Amplitudes are linear combinations of the basis-state dipoles weighted by
    the eigenstate components; forbidden pairs appear with zero amplitude.
    The list is ordered ground spin (-1, 0, +1) outer, eigenstate inner.
    """
    out: list[TransitionDipole] = []
    for g in (-1, 0, +1):
        for i in range(6):
            a_plus = 0.0 + 0.0j
            a_minus = 0.0 + 0.0j
            for b, label in enumerate(BASIS_LABELS):
                entry = _DIPOLE_TABLE[label].get(g)
                if entry is None:
                    continue
                c = levels.states[b, i]
                a_plus += c * entry[0]
                a_minus += c * entry[1]
            out.append(
                TransitionDipole(
                    ground_spin=g,
                    excited_index=i,
                    sigma_plus=complex(a_plus),
                    sigma_minus=complex(a_minus),
                    ellipticity=_ellipticity(a_plus, a_minus),
                )
            )
    return out


def ground_levels(params: GroundParams) -> tuple[float, float, float]:
    """Ground triplet energies (MHz) in spin order (m=0, m=-1, m=+1).

    m=0 is the zero reference; the +-1 levels sit at d_gs -+ z with
    z = zeeman_per_gauss * b_field, so the two spin-flip transition
    frequencies differ by 2z.
    """
    z = params.zeeman_per_gauss * params.b_field
    return (0.0, params.d_gs - z, params.d_gs + z)


def transition_map(
    excited: ExcitedStateParams | LevelSet,
    ground: GroundParams | None = None,
) -> list[TransitionEntry]:
    """Optical transition table: 3 ground spins x 6 eigenstates.

    offset_mhz is excited energy minus ground energy (both relative to their
    manifold references), i.e. the optical frequency offset of the line.
    The 6 entries pairing each eigenstate with its representative
    spin-conserving ground level at zero strain are labeled "direct"
    (dominant-character lookup); the other 12 are "cross".
    """
    ground = ground or GroundParams()
    levels = excited if isinstance(excited, LevelSet) else solve_levels(excited)
    g0, gm, gp = ground_levels(ground)
    ground_energy = {0: g0, -1: gm, +1: gp}
    dipoles = {(t.ground_spin, t.excited_index): t for t in transition_dipoles(levels)}

    entries: list[TransitionEntry] = []
    for g in (-1, 0, +1):
        for i in range(6):
            partner = _DIRECT_PARTNER[levels.dominant_label(i)]
            entries.append(
                TransitionEntry(
                    ground_spin=g,
                    excited_index=i,
                    offset_mhz=float(levels.energies[i] - ground_energy[g]),
                    label="direct" if g == partner else "cross",
                    dipole=dipoles[(g, i)],
                )
            )
    return entries
