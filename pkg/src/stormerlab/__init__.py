"""stormerlab: charged-particle dynamics in a dipole magnetic field.

Library + CLI for integrating the reduced meridian-plane motion, painting
chaos-indicator maps (Lyapunov exponent, escape/crossing times, latitude
asymmetry) over grids of zero-velocity starts, and locating symmetric
open periodic orbits.
"""

__version__ = "0.1.0"

from .backend import active_backend
from .dynamics import (
    CRITICAL_ENERGY,
    MeridianState,
    PhaseDerivative,
    TurningPoints,
    energy,
    eom_rhs,
    in_scan_domain,
    jacobian,
    latitude,
    outer_boundary_radius,
    potential,
    turning_points,
)
from .errors import ConfigError, DomainError, IntegrationError, StormerlabError
from .integrator import (
    EventRecord,
    EventSpec,
    IntegrationResult,
    IntegratorConfig,
    integrate,
    integrate_variational,
    integrate_with_events,
)
