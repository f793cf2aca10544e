"""Dimensionless meridian-plane dynamics of a charged particle in a dipole
field: effective potential, forces, linearization, conserved energy, and the
closed-form geometric quantities used by the maps.

All quantities are dimensionless. The state lives in the (z, rho) half plane
with rho > 0; the field's symmetry axis is z.
"""

from dataclasses import dataclass

import math
import numpy as np

from .backend import kernel
from .errors import DomainError

# saddle of the equatorial potential, at (z, rho) = (0, 2)
CRITICAL_ENERGY = 1.0 / 32.0

# states closer to the axis/origin than this are rejected as domain errors;
# the field diverges there and step control stalls
RHO_FLOOR = 1e-6
R_FLOOR = 1e-6


@dataclass(frozen=True)
class MeridianState:
    """Phase-space point of the reduced motion, plus its time tag."""

    z: float
    rho: float
    p_z: float
    p_rho: float
    t: float = 0.0

    def coords(self):
        return (self.z, self.rho, self.p_z, self.p_rho)

    @staticmethod
    def at_rest(z, rho, t=0.0):
        """Zero-meridian-velocity start (azimuthal initial velocity only)."""
        return MeridianState(z, rho, 0.0, 0.0, t)


@dataclass(frozen=True)
class PhaseDerivative:
    dz: float
    drho: float
    dp_z: float
    dp_rho: float


@dataclass(frozen=True)
class TurningPoints:
    """Equatorial turning radii of the inner allowed region, rho_min < rho_max."""

    rho_min: float
    rho_max: float


def _check_point(z, rho):
    if not rho > RHO_FLOOR:
        raise DomainError(f"rho={rho!r} too close to the symmetry axis")
    if z * z + rho * rho <= R_FLOOR * R_FLOOR:
        raise DomainError("point too close to the origin")


def potential(z, rho):
    """Effective potential V(z, rho) = ((1/rho) - rho/r^3)^2 / 2, r^2 = z^2 + rho^2."""
    _check_point(z, rho)
    return kernel.potential(z, rho)


def eom_rhs(state):
    """Hamiltonian vector field at a state: (p_z, p_rho, f, g) with (f, g) = -grad V."""
    _check_point(state.z, state.rho)
    f, g = kernel.forces(state.z, state.rho)
    return PhaseDerivative(state.p_z, state.p_rho, f, g)


def energy(state):
    """Conserved energy H = (p_z^2 + p_rho^2)/2 + V."""
    _check_point(state.z, state.rho)
    return kernel.energy(state.z, state.rho, state.p_z, state.p_rho)


def jacobian(state):
    """4x4 linearization of eom_rhs at a state, ordered (z, rho, p_z, p_rho).

    The force block is the negated Hessian of V, so it is symmetric:
    d f/d rho == d g/d z.
    """
    _check_point(state.z, state.rho)
    dfdz, dfdr, dgdr = kernel.force_jacobian(state.z, state.rho)
    return np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [dfdz, dfdr, 0.0, 0.0],
        [dfdr, dgdr, 0.0, 0.0],
    ])


def turning_points(H):
    """Closed-form equatorial turning radii for 0 < H <= 1/32.

    V(0, rho_min) = V(0, rho_max) = H with 0 < rho_min < 1 < rho_max <= 2.
    """
    if not (0.0 < H <= CRITICAL_ENERGY):
        raise DomainError(f"turning points are real only for 0 < H <= 1/32, got {H!r}")
    q = math.sqrt(2.0 * H)
    rho_max = (1.0 - math.sqrt(1.0 - 4.0 * q)) / (2.0 * q)
    rho_min = (math.sqrt(1.0 + 4.0 * q) - 1.0) / (2.0 * q)
    return TurningPoints(rho_min=rho_min, rho_max=rho_max)


def outer_boundary_radius(H):
    """Radius (4H)^(-1/3) beyond which the radial motion is monotonically outward."""
    if not H > 0.0:
        raise DomainError(f"boundary radius requires H > 0, got {H!r}")
    return (4.0 * H) ** (-1.0 / 3.0)


def latitude(z, rho):
    """Latitude arcsin(z/r) in [-pi/2, pi/2]; rho may be 0 here (axis) as long as r > 0."""
    r = math.sqrt(z * z + rho * rho)
    if not r > 0.0:
        raise DomainError("latitude undefined at the origin")
    return math.asin(z / r)


def in_scan_domain(z, rho):
    """Inside (or on) the bounding field line through (z=0, rho=2): r^3 <= 2 rho^2."""
    r = math.sqrt(z * z + rho * rho)
    if not r > 0.0:
        raise DomainError("domain test undefined at the origin")
    return r * r * r <= 2.0 * rho * rho


def thalweg_gap(z, rho):
    """r^3 - rho^2: zero on the potential valley floor r = cos^2(lambda),
    negative on its inner (origin) side, positive outside."""
    r = math.sqrt(z * z + rho * rho)
    return r * r * r - rho * rho
