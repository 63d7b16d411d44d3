"""Closed-form photonic collection and cavity-enhancement calculators.

All functions are pure.  Rates and linewidths are in MHz, lifetimes in ns,
wavelengths in nm.  Mode volumes are accepted directly in units of
(lambda0/n)^3, so no field-profile integration happens here.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .errors import InvalidGeometryError, InvalidParameterError

# free-space emitter decay rate used as the Purcell reference, MHz
DEFAULT_RADIATIVE_RATE_MHZ = 13.0
_SPEED_OF_LIGHT_NM_MHZ = 299792458.0 * 1e3  # c in nm * MHz


@dataclass(frozen=True)
class CollectionGeometry:
    """Objective collection geometry for a dipole inside a high-index host.

    phi_em is the angle between the emission dipole and the optical axis;
    pi/2 is the sideways dipole that collects best.
    """

    na: float
    n1: float = 1.0
    n2: float = 2.4
    phi_em: float = math.pi / 2.0

    def __post_init__(self) -> None:
        if self.na <= 0:
            raise InvalidGeometryError(f"numerical aperture must be > 0, got {self.na}")
        if self.na > self.n1:
            raise InvalidGeometryError(
                f"numerical aperture {self.na} cannot exceed the collection index {self.n1}"
            )
        if self.n2 <= 0:
            raise InvalidGeometryError(f"emitter index must be > 0, got {self.n2}")
        if not 0.0 <= self.phi_em <= math.pi / 2.0:
            raise InvalidGeometryError(f"phi_em must lie in [0, pi/2], got {self.phi_em}")
        if self.na * self.n1 / self.n2 > 1.0:
            raise InvalidGeometryError(
                "na*n1/n2 exceeds 1; no real internal collection angle exists"
            )

    @property
    def theta_max(self) -> float:
        return math.asin(self.na * self.n1 / self.n2)


def collection_efficiency(geometry, n1=None, n2=None, phi_em=None) -> float:
    """Fraction of dipole emission entering the collection cone.

    Accepts either a CollectionGeometry or the four scalars
    (na, n1, n2, phi_em).
    """
    if not isinstance(geometry, CollectionGeometry):
        geometry = CollectionGeometry(
            na=float(geometry),
            n1=1.0 if n1 is None else float(n1),
            n2=2.4 if n2 is None else float(n2),
            phi_em=math.pi / 2.0 if phi_em is None else float(phi_em),
        )
    ct = math.cos(geometry.theta_max)
    cp2 = math.cos(geometry.phi_em) ** 2
    return (4.0 - 3.0 * ct - ct**3 + 3.0 * (ct**3 - ct) * cp2) / 8.0


@dataclass(frozen=True)
class CavityParams:
    """Cavity figures for Purcell-factor bookkeeping.

    mode_volume is in units of (lambda0/n_eff)^3.  field_overlap is
    |E(emitter)|^2 / |E_max|^2, dipole_overlap the polarization alignment
    factor, xi the fraction of bare emission in the coupled zero-phonon line.
    """

    q: float
    mode_volume: float = 1.0
    lambda0: float = 637.0
    n_eff: float = 1.7
    field_overlap: float = 1.0
    dipole_overlap: float = 1.0
    xi: float = 0.03

    def __post_init__(self) -> None:
        if self.q <= 0:
            raise InvalidParameterError(f"q must be > 0, got {self.q}")
        if self.mode_volume <= 0:
            raise InvalidParameterError(f"mode_volume must be > 0, got {self.mode_volume}")
        if self.lambda0 <= 0:
            raise InvalidParameterError(f"lambda0 must be > 0, got {self.lambda0}")
        if not 1.0 <= self.n_eff <= 2.4:
            raise InvalidParameterError(f"n_eff must lie in [1, 2.4], got {self.n_eff}")
        for name in ("field_overlap", "dipole_overlap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 < self.xi < 1.0:
            raise InvalidParameterError(f"xi must lie in (0, 1), got {self.xi}")


def purcell_from_cavity(cavity: CavityParams) -> float:
    """Emission-rate enhancement of the coupled line, per the cavity figures."""
    return (
        3.0
        / (4.0 * math.pi**2)
        * cavity.q
        / cavity.mode_volume
        * cavity.field_overlap
        * cavity.dipole_overlap
        * cavity.xi
    )


def cooperativity(g_coupling: float, kappa: float, gamma: float) -> float:
    """2 g^2 / (kappa gamma); all three rates in the same units (MHz)."""
    if kappa <= 0 or gamma <= 0:
        raise InvalidParameterError("kappa and gamma must be > 0")
    return 2.0 * g_coupling**2 / (kappa * gamma)


def cavity_coupling_rates(
    cavity: CavityParams, gamma_rad: float = DEFAULT_RADIATIVE_RATE_MHZ
) -> tuple[float, float, float]:
    """Map cavity figures to (g, kappa, gamma) in MHz.

    kappa is the cavity linewidth omega/Q; g collects the emitter-field
    coupling with the overlap and branching factors.  Built so that
    cooperativity(g, kappa, gamma) equals purcell_from_cavity(cavity)
    identically (the optical frequency cancels in the ratio).
    """
    if gamma_rad <= 0:
        raise InvalidParameterError(f"gamma_rad must be > 0, got {gamma_rad}")
    omega = _SPEED_OF_LIGHT_NM_MHZ / cavity.lambda0  # optical frequency, MHz
    kappa = omega / cavity.q
    g2 = (
        3.0
        / (8.0 * math.pi**2)
        * omega
        * gamma_rad
        * cavity.field_overlap
        * cavity.dipole_overlap
        * cavity.xi
        / cavity.mode_volume
    )
    return math.sqrt(g2), kappa, gamma_rad


def purcell_from_lifetimes(tau0: float, tau: float) -> float:
    """Rate enhancement inferred from lifetimes: tau0/tau - 1.

    tau > tau0 yields a negative value; that is returned (it is what the data
    says) with a warning, since it usually signals swapped arguments.
    """
    if tau0 <= 0 or tau <= 0:
        raise InvalidParameterError("lifetimes must be > 0")
    p = tau0 / tau - 1.0
    if p < 0:
        warnings.warn(
            f"negative enhancement {p:.4f}: cavity lifetime {tau} ns exceeds bare "
            f"lifetime {tau0} ns",
            stacklevel=2,
        )
    return p


def zpl_enhancement(p: float, xi: float = 0.03) -> float:
    """Enhancement of the zero-phonon-line rate alone: P' = P / xi."""
    if not 0.0 < xi < 1.0:
        raise InvalidParameterError(f"xi must lie in (0, 1), got {xi}")
    if p < 0:
        raise InvalidParameterError(f"p must be >= 0, got {p}")
    return p / xi


def zpl_fraction_enhanced(p: float, xi: float = 0.03) -> float:
    """Fraction of total emission in the coupled line once enhanced.

    The bare emitter radiates 1 unit of rate, xi of it in the coupled line;
    the cavity adds p units, all into that line.  The line fraction is then
    (xi + p) / (1 + p).
    """
    if not 0.0 < xi < 1.0:
        raise InvalidParameterError(f"xi must lie in (0, 1), got {xi}")
    if p < 0:
        raise InvalidParameterError(f"p must be >= 0, got {p}")
    return (p + xi) / (1.0 + p)


def required_q(
    linewidth_gamma_ext: float,
    xi: float = 0.03,
    mode_volume: float = 1.0,
    field_overlap: float = 1.0,
    dipole_overlap: float = 1.0,
    gamma_rad: float = DEFAULT_RADIATIVE_RATE_MHZ,
) -> float:
    """Quality factor needed to outpace an external dephasing linewidth.

    Targets an enhanced emission rate equal to the external linewidth, i.e.
    P = linewidth / gamma_rad, and inverts the cavity Purcell expression
    for Q at the given volume and overlaps.
    """
    if linewidth_gamma_ext < 0:
        raise InvalidParameterError("linewidth must be >= 0")
    if gamma_rad <= 0 or mode_volume <= 0:
        raise InvalidParameterError("gamma_rad and mode_volume must be > 0")
    if not 0.0 < xi < 1.0:
        raise InvalidParameterError(f"xi must lie in (0, 1), got {xi}")
    if not (0.0 < field_overlap <= 1.0 and 0.0 < dipole_overlap <= 1.0):
        raise InvalidParameterError("overlaps must lie in (0, 1]")
    p_target = linewidth_gamma_ext / gamma_rad
    return (
        p_target
        * (4.0 * math.pi**2 / 3.0)
        * mode_volume
        / (field_overlap * dipole_overlap * xi)
    )


__all__ = [
    "CollectionGeometry",
    "CavityParams",
    "collection_efficiency",
    "purcell_from_cavity",
    "cooperativity",
    "cavity_coupling_rates",
    "purcell_from_lifetimes",
    "zpl_enhancement",
    "zpl_fraction_enhanced",
    "required_q",
    "DEFAULT_RADIATIVE_RATE_MHZ",
]
