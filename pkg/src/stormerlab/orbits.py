"""Symmetric open periodic orbits: crossing sequences, perpendicularity
residuals, root refinement, verification, classification, and family
assembly.

The underlying facts: an orbit started at rest in the meridian plane
retraces itself under time reversal, and any such orbit that crosses the
equatorial plane perpendicularly (z = 0, p_rho = 0) at time t1 is a
symmetric periodic orbit of period 4*t1, with a second static point at
(-z0, rho0) at half period. Class s_n collects orbits whose n-th
equatorial crossing is the perpendicular one.
"""

from dataclasses import dataclass, replace

import math

from .dynamics import MeridianState, energy, thalweg_gap
from .errors import ClassificationError, DomainError, RefinementError
from .integrator import (
    EQUATORIAL_CROSSING,
    ESCAPE,
    EventSpec,
    IntegratorConfig,
    THALWEG_CROSSING,
    TIME_CAP,
    integrate,
    integrate_with_events,
)

UNREACHABLE = math.nan

CLASSIFY_TOL = 1e-8      # |p_rho| at a crossing to call it perpendicular
VERIFY_TOL = 1e-5        # verification norms of an accepted orbit
SEARCH_T_CAP = 1000.0    # give up waiting for crossings after this long


@dataclass(frozen=True)
class CrossingRecord:
    """One transversal equatorial-plane crossing."""

    ordinal: int
    t: float
    rho: float
    p_rho: float     # the perpendicularity residual
    p_z: float


@dataclass(frozen=True)
class CrossingSequence:
    records: tuple
    reason: str      # what ended the run: time_cap | escape | singularity | equatorial_crossing
    complete: bool   # collected the requested number of crossings


@dataclass(frozen=True)
class VerifyResult:
    """Residual norms of the periodic-orbit conditions for T = 4*t_perp."""

    perp_z: float        # |z| at t_perp
    perp_p_rho: float    # |p_rho| at t_perp
    half_norm: float     # |state(T/2) - (-z0, rho0, 0, 0)|
    full_norm: float     # |state(T) - start|

    def max(self):
        return max(self.perp_z, self.perp_p_rho, self.half_norm, self.full_norm)


@dataclass(frozen=True)
class PeriodicOrbit:
    z0: float
    rho0: float
    class_n: int             # smallest crossing ordinal with vanishing residual
    t_perp: float            # time of the perpendicular crossing
    period: float            # 4 * t_perp
    H: float
    residuals: VerifyResult
    crossing_residuals: tuple  # p_rho at crossings 1..n_detected (answers class overlap)
    n_eq_half: int           # distinct equatorial crossing points per half period
    n_thalweg_half: int      # distinct valley-floor crossing points per half period
    family_id: int = -1


@dataclass(frozen=True)
class FamilyPolyline:
    id: int
    class_n: int
    points: tuple            # ordered PeriodicOrbit members
    is_loop: bool


def crossing_sequence(start, n_max, t_cap=SEARCH_T_CAP, config=IntegratorConfig()):
    """The first n_max transversal z = 0 crossings of an orbit, in time order.

    The start must be off the equatorial plane (z0 != 0): the plane with
    p_z = 0 is invariant and never produces a crossing. Fewer records come
    back when the orbit escapes (rho >= 2), falls into the guard radius,
    or runs out of time.
    """
    if start.z == 0.0 and start.p_z == 0.0:
        raise DomainError("start lies in the invariant equatorial plane (z0 = 0)")
    if not start.rho > 0.0:
        raise DomainError("rho0 must be positive")
    cfg = replace_t_cap(config, t_cap)
    specs = (EventSpec(EQUATORIAL_CROSSING, direction=0, max_count=n_max),
             EventSpec(ESCAPE, direction=1))
    records, final, reason = integrate_with_events(start, cfg, specs, stop_on={ESCAPE})
    crossings = tuple(
        CrossingRecord(r.ordinal, r.t_event, r.state.rho, r.state.p_rho, r.state.p_z)
        for r in records if r.kind == EQUATORIAL_CROSSING
    )
    complete = len(crossings) >= n_max
    if complete:
        reason = EQUATORIAL_CROSSING
    return CrossingSequence(crossings, reason, complete)


def replace_t_cap(config, t_cap):
    return IntegratorConfig(abs_tol=config.abs_tol, rel_tol=config.rel_tol,
                            h_init=config.h_init, h_max=config.h_max,
                            t_cap=t_cap, r_min=config.r_min,
                            graze_tol=config.graze_tol, max_steps=config.max_steps)


def perp_residual(start, n, t_cap=SEARCH_T_CAP, config=IntegratorConfig()):
    """Signed p_rho at the n-th equatorial crossing; NaN when unreachable."""
    seq = crossing_sequence(start, n, t_cap=t_cap, config=config)
    if len(seq.records) < n:
        return UNREACHABLE
    return seq.records[n - 1].p_rho


def _residual_and_time(z0, rho0, n, t_cap, config):
    seq = crossing_sequence(MeridianState.at_rest(z0, rho0), n, t_cap=t_cap, config=config)
    if len(seq.records) < n:
        return UNREACHABLE, UNREACHABLE
    return seq.records[n - 1].p_rho, seq.records[n - 1].t


def refine_root(p_a, p_b, n, tol=CLASSIFY_TOL, t_cap=SEARCH_T_CAP,
                config=IntegratorConfig(), min_segment=1e-10, target_tol=None):
    """Bisect the n-th-crossing residual to zero along the segment p_a..p_b.

    p_a and p_b are (z0, rho0) pairs whose residuals are reachable and of
    opposite sign. Bisection runs until |residual| < target_tol (default:
    tol) or the bracket is shorter than min_segment; the best point seen is
    accepted if its residual passes tol. Setting target_tol=0 exhausts the
    bracket, which pays off downstream: later-crossing residuals amplify
    whatever error is left at the start point. Raises RefinementError when
    the residual becomes unreachable inside the bracket or the bracket
    collapses without passing tol (a residual-branch discontinuity, not a
    root).
    """
    if target_tol is None:
        target_tol = tol
    (za, ra_), (zb, rb_) = p_a, p_b
    res_a, t_a = _residual_and_time(za, ra_, n, t_cap, config)
    res_b, t_b = _residual_and_time(zb, rb_, n, t_cap, config)
    if math.isnan(res_a) or math.isnan(res_b):
        raise DomainError("residual unreachable at a bracket endpoint")
    if not (res_a < 0.0 < res_b or res_b < 0.0 < res_a):
        raise DomainError("bracket endpoints must have opposite residual signs")

    best = None
    lo, hi = 0.0, 1.0
    res_lo = res_a
    seg_len = math.hypot(zb - za, rb_ - ra_)
    while (hi - lo) * seg_len > min_segment:
        mid = 0.5 * (lo + hi)
        zm = za + mid * (zb - za)
        rm = ra_ + mid * (rb_ - ra_)
        res_m, t_m = _residual_and_time(zm, rm, n, t_cap, config)
        if math.isnan(res_m):
            raise RefinementError(
                f"residual unreachable inside the bracket at ({zm}, {rm})")
        if best is None or abs(res_m) < abs(best[2]):
            best = (MeridianState.at_rest(zm, rm), t_m, res_m)
        if abs(res_m) < target_tol:
            return best
        if (res_lo < 0.0) == (res_m < 0.0):
            lo = mid
            res_lo = res_m
        else:
            hi = mid
    if best is not None and abs(best[2]) < tol:
        return best
    raise RefinementError(
        f"bracket collapsed without convergence (best residual {best[2] if best else None})")


def verify(start, t_perp, config=IntegratorConfig()):
    """Three residual norms of the period-4*t_perp periodicity conditions.

    perp: (|z|, |p_rho|) at t_perp; half: distance of state(2*t_perp) from
    the mirrored static point (-z0, rho0, 0, 0); full: distance of
    state(4*t_perp) from the start.
    """
    if not t_perp > 0.0:
        raise DomainError("t_perp must be positive")
    z0, rho0 = start.z, start.rho
    s1 = integrate(start, replace_t_cap(config, t_perp)).state
    s2 = integrate(start, replace_t_cap(config, 2.0 * t_perp)).state
    s4 = integrate(start, replace_t_cap(config, 4.0 * t_perp)).state
    half = math.sqrt((s2.z + z0) ** 2 + (s2.rho - rho0) ** 2
                     + s2.p_z ** 2 + s2.p_rho ** 2)
    full = math.sqrt((s4.z - z0) ** 2 + (s4.rho - rho0) ** 2
                     + (s4.p_z - start.p_z) ** 2 + (s4.p_rho - start.p_rho) ** 2)
    return VerifyResult(abs(s1.z), abs(s1.p_rho), half, full)


def _merged_count(times, t_half, rel_tol=1e-6):
    """Distinct crossing points among events in (0, t_half): for a symmetric
    orbit, events mirror-pair as t and t_half - t; each pair is one point."""
    if not times:
        return 0
    tol = rel_tol * t_half
    used = [False] * len(times)
    count = 0
    for i, ti in enumerate(times):
        if used[i]:
            continue
        used[i] = True
        count += 1
        if abs(2.0 * ti - t_half) <= tol:
            continue  # self-mirrored event (at the quarter period)
        partner = t_half - ti
        for j in range(i + 1, len(times)):
            if not used[j] and abs(times[j] - partner) <= tol:
                used[j] = True
                break
    return count


def half_period_counts(start, t_half, config=IntegratorConfig()):
    """Raw equatorial-plane and valley-floor crossing counts over (0, t_half)."""
    cfg = replace_t_cap(config, t_half * (1.0 - 1e-12))
    specs = (EventSpec(EQUATORIAL_CROSSING), EventSpec(THALWEG_CROSSING))
    records, final, reason = integrate_with_events(start, cfg, specs)
    eq_t = [r.t_event for r in records if r.kind == EQUATORIAL_CROSSING]
    th_t = [r.t_event for r in records if r.kind == THALWEG_CROSSING]
    return eq_t, th_t


def classify(start, t_perp, n_detected, tol=CLASSIFY_TOL, verify_tol=VERIFY_TOL,
             config=IntegratorConfig()):
    """Build the PeriodicOrbit record for a located perpendicular crossing.

    class_n is the smallest ordinal m <= n_detected whose crossing residual
    passes tol (an orbit perpendicular at its first crossing is s1 even
    when found by an s2/s3 scan). The half-period crossing counters merge
    mirror-paired events, counting distinct crossing points.
    """
    res = verify(start, t_perp, config=config)
    if res.max() >= verify_tol:
        raise DomainError(
            f"verification norms {res} exceed {verify_tol}; not a periodic orbit")
    # crossings up to the perpendicular one: its ordinal is the detected class bound
    seq = crossing_sequence(start, n_detected, t_cap=t_perp * (1.0 + 1e-6),
                            config=config)
    upto = [r for r in seq.records if r.t <= t_perp * (1.0 + 1e-6)]
    if not upto or abs(upto[-1].t - t_perp) > 1e-6 * t_perp + 1e-9:
        raise ClassificationError(
            f"t_perp={t_perp} is not among the first {n_detected} crossings")
    class_n = 0
    for rec in upto:
        if abs(rec.p_rho) < tol:
            class_n = rec.ordinal
            break
    if class_n == 0:
        raise ClassificationError(
            f"no crossing residual below {tol}:"
            f" {tuple(r.p_rho for r in upto)}")
    # residuals at the first few crossings, past t_perp too (class-overlap record)
    longseq = crossing_sequence(start, max(3, len(upto)), t_cap=6.5 * t_perp,
                                config=config)
    residuals = tuple(r.p_rho for r in longseq.records)
    t_half = 2.0 * t_perp
    eq_t, th_t = half_period_counts(start, t_half, config=config)
    return PeriodicOrbit(
        z0=start.z, rho0=start.rho, class_n=class_n, t_perp=t_perp,
        period=4.0 * t_perp, H=energy(start), residuals=res,
        crossing_residuals=residuals,
        n_eq_half=_merged_count(eq_t, t_half),
        n_thalweg_half=_merged_count(th_t, t_half),
    )


def _edge_job(args):
    edge, cfg = args
    icfg = cfg.integrator(cfg.search_t_cap)
    try:
        state, t_perp, res = refine_root(edge.a, edge.b, edge.n, tol=cfg.refine_tol,
                                         t_cap=cfg.search_t_cap, config=icfg,
                                         target_tol=0.0)
        po = classify(state, t_perp, edge.n, tol=cfg.refine_tol,
                      verify_tol=cfg.verify_tol, config=icfg)
        return True, po, edge.cell
    except (DomainError, RefinementError, ClassificationError) as exc:
        return False, f"{type(exc).__name__}: {exc}", edge.cell


def refine_edges(edges, cfg, workers=1):
    """Refine every sign-change edge into a classified orbit.

    Edges are processed in order (deterministic regardless of worker
    count). Returns (orbits, cells, failures); failures carry the edge and
    the reason it was skipped.
    """
    jobs = [(edge, cfg) for edge in edges]
    if workers <= 1 or len(jobs) <= 1:
        results = [_edge_job(job) for job in jobs]
    else:
        from multiprocessing import get_context
        ctx = get_context("fork")
        with ctx.Pool(workers) as pool:
            results = pool.map(_edge_job, jobs, chunksize=1)
    orbits = []
    cells = []
    failures = []
    for edge, (ok, payload, cell) in zip(edges, results):
        if ok:
            orbits.append(payload)
            cells.append(cell)
        else:
            failures.append((edge, payload))
    return orbits, cells, failures


def assemble_families(points, cells, class_n=0):
    """Chain refined orbit points into family polylines.

    points: PeriodicOrbit records; cells: matching (ix, iy) grid-cell
    indices from the originating scan. Components are connected sets of
    cells under 8-neighborhood adjacency; each is ordered by greedy
    nearest-neighbor chaining and flagged as a loop when its chain ends in
    adjacent cells.
    """
    n = len(points)
    if n == 0:
        return []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    by_cell = {}
    for i, c in enumerate(cells):
        by_cell.setdefault(c, []).append(i)
    for (ix, iy), members in by_cell.items():
        for other in members[1:]:
            union(members[0], other)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                nb = (ix + dx, iy + dy)
                if nb in by_cell:
                    union(members[0], by_cell[nb][0])

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    families = []
    for fid, members in enumerate(sorted(groups.values(),
                                         key=lambda m: (points[m[0]].rho0, points[m[0]].z0))):
        start_i = min(members, key=lambda i: (points[i].rho0, points[i].z0))
        chain = [start_i]
        remaining = set(members) - {start_i}
        while remaining:
            last = points[chain[-1]]
            nxt = min(remaining, key=lambda i: (points[i].z0 - last.z0) ** 2
                      + (points[i].rho0 - last.rho0) ** 2)
            chain.append(nxt)
            remaining.discard(nxt)
        is_loop = False
        if len(chain) >= 4:
            (ax, ay), (bx, by) = cells[chain[0]], cells[chain[-1]]
            is_loop = abs(ax - bx) <= 1 and abs(ay - by) <= 1
        members_ordered = tuple(replace(points[i], family_id=fid) for i in chain)
        families.append(FamilyPolyline(id=fid, class_n=class_n or
                                       members_ordered[0].class_n,
                                       points=members_ordered, is_loop=is_loop))
    return families
