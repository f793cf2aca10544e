"""Per-start scalar diagnostics: finite-time maximum Lyapunov exponent,
escape time, threshold-crossing time, and latitude extrema.

Each evaluation is a pure function of its inputs; scans parallelize them
freely across initial conditions.
"""

from dataclasses import dataclass

import math

from .backend import kernel
from .dynamics import CRITICAL_ENERGY, MeridianState, energy, turning_points
from .errors import DomainError
from .integrator import ESCAPE, ESCAPE_RADIUS, EventSpec, IntegratorConfig, RADIUS_REACHED, integrate_with_events

TRAPPED = math.inf

DEFAULT_CAP = 1e4
DEFAULT_MLCE_TIME = 1e4
DEFAULT_RENORM_INTERVAL = 1.0
# initial tangent: unit vector with equal components
DEFAULT_TANGENT = (0.5, 0.5, 0.5, 0.5)


def regular_threshold(total_time):
    """Classification bar for 'regular': finite-time estimates of a zero
    exponent decay like ln(t)/t."""
    return 10.0 * math.log(total_time) / total_time


@dataclass(frozen=True)
class MlceResult:
    value: float            # finite-time estimate sum(ln |v|) / elapsed
    renorm_count: int
    elapsed: float
    converged: bool         # ran the full requested time
    hit_singularity: bool
    escaped: bool
    failed: bool = False    # integrator gave up (step underflow/budget)
    history: tuple = ()     # (t, running estimate) samples at renormalizations


@dataclass(frozen=True)
class EscapeResult:
    t_esc: float            # time to reach rho = 2; TRAPPED (inf) if > cap
    cap: float
    hit_singularity: bool = False

    @property
    def trapped(self):
        return math.isinf(self.t_esc) and not self.hit_singularity


@dataclass(frozen=True)
class CrossingResult:
    t_cross: float          # first outward crossing of the near-turning radius
    cap: float
    threshold: float
    hit_singularity: bool = False

    @property
    def trapped(self):
        return math.isinf(self.t_cross) and not self.hit_singularity


@dataclass(frozen=True)
class LambdaExtrema:
    lambda_min: float
    lambda_max: float
    complete: bool          # False when the run ended early (escape/guard)

    @property
    def sum(self):
        return self.lambda_min + self.lambda_max


def mlce(start, total_time=DEFAULT_MLCE_TIME, renorm_interval=DEFAULT_RENORM_INTERVAL,
         config=IntegratorConfig(), tangent=DEFAULT_TANGENT, collect_history=False):
    """Finite-time maximum Lyapunov exponent by tangent-vector renormalization.

    The tangent is evolved by the linearized flow alongside the orbit; its
    log-norm is banked and the vector rescaled to unit length every
    renorm_interval. The estimate is the banked sum (plus the final
    partial log) divided by the elapsed time. Escaping the domain
    (rho >= 2) or hitting the singularity guard ends the run early and is
    flagged; the partial estimate is still returned.
    """
    if not (total_time > renorm_interval > 0.0):
        raise DomainError("need total_time > renorm_interval > 0")
    config.validated()
    if not any(c != 0.0 for c in tangent):
        raise DomainError("tangent vector must be non-zero")
    out = kernel.run_mlce(start.z, start.rho, start.p_z, start.p_rho,
                          tuple(float(c) for c in tangent),
                          start.t, total_time, renorm_interval,
                          config.abs_tol, config.rel_tol, config.h_init,
                          config.h_max, config.r_min,
                          ESCAPE_RADIUS, collect_history, config.max_steps)
    status, t, y, v, sum_logs, count, hist_t, hist_est = out
    elapsed = t - start.t
    vnorm = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3])
    if elapsed > 0.0 and vnorm > 0.0:
        value = (sum_logs + math.log(vnorm)) / elapsed
    else:
        value = math.nan
    return MlceResult(
        value=value,
        renorm_count=count,
        elapsed=elapsed,
        converged=status == kernel.OK_TIME,
        hit_singularity=status == kernel.HIT_SINGULARITY,
        escaped=status == kernel.STOPPED_EVENT,
        failed=status in (kernel.STEP_UNDERFLOW, kernel.STEP_LIMIT, kernel.BAD_START),
        history=tuple(zip(hist_t, hist_est)),
    )


def escape_time(start, cap=DEFAULT_CAP, config=IntegratorConfig()):
    """Time for the orbit to reach rho = 2; TRAPPED if it exceeds the cap.

    A singularity-guard hit is reported as its own sentinel (NaN t_esc with
    the flag set), distinct from TRAPPED.
    """
    cfg = IntegratorConfig(abs_tol=config.abs_tol, rel_tol=config.rel_tol,
                           h_init=config.h_init, h_max=config.h_max,
                           t_cap=cap, r_min=config.r_min,
                           graze_tol=config.graze_tol, max_steps=config.max_steps)
    records, final, reason = integrate_with_events(
        start, cfg, (EventSpec(ESCAPE, direction=1),), stop_on={ESCAPE})
    if reason == ESCAPE:
        return EscapeResult(records[-1].t_event - start.t, cap)
    if reason == "singularity":
        return EscapeResult(math.nan, cap, hit_singularity=True)
    return EscapeResult(TRAPPED, cap)


def crossing_threshold(H):
    """Radius just inside the outer equatorial turning point: rho_max - (rho_max - rho_min)/50."""
    tp = turning_points(H)
    return tp.rho_max - (tp.rho_max - tp.rho_min) / 50.0


def crossing_time(start, cap=DEFAULT_CAP, config=IntegratorConfig()):
    """First crossing of the near-turning radius with positive p_rho.

    Defined for 0 < H < 1/32 (the turning radii must exist and be
    non-degenerate); TRAPPED when no outward crossing occurs before the cap.
    """
    H = energy(start)
    if not 0.0 < H < CRITICAL_ENERGY:
        raise DomainError(f"crossing time needs 0 < H < 1/32, got H={H!r}")
    thr = crossing_threshold(H)
    cfg = IntegratorConfig(abs_tol=config.abs_tol, rel_tol=config.rel_tol,
                           h_init=config.h_init, h_max=config.h_max,
                           t_cap=cap, r_min=config.r_min,
                           graze_tol=config.graze_tol, max_steps=config.max_steps)
    records, final, reason = integrate_with_events(
        start, cfg, (EventSpec(RADIUS_REACHED, threshold=thr, direction=1),),
        stop_on={RADIUS_REACHED})
    if reason == RADIUS_REACHED:
        return CrossingResult(records[-1].t_event - start.t, cap, thr)
    if reason == "singularity":
        return CrossingResult(math.nan, cap, thr, hit_singularity=True)
    return CrossingResult(TRAPPED, cap, thr)


def lambda_extrema(start, total_time=DEFAULT_CAP, config=IntegratorConfig()):
    """Running extrema of the latitude arcsin(z/r) over the orbit.

    Sampled at every accepted step and every event point. Escape (rho >= 2)
    or a singularity-guard hit ends the run early; the extrema over the
    traversed span are returned with complete=False.
    """
    config.validated()
    out = kernel.run(start.z, start.rho, start.p_z, start.p_rho,
                     start.t, start.t + total_time,
                     config.abs_tol, config.rel_tol, config.h_init,
                     config.h_max, config.r_min,
                     [kernel.KIND_ESCAPE], [ESCAPE_RADIUS], [1], [True], [0],
                     config.graze_tol, 0.0, True, 1_000_000, config.max_steps)
    status, t, y, drift, nsteps, nrej, records, samples, lam_min, lam_max = out
    if status == kernel.BAD_START:
        raise DomainError("vector field not evaluable at the initial state")
    return LambdaExtrema(lam_min, lam_max, complete=status == kernel.OK_TIME)
