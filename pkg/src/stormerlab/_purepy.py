"""Pure-Python integration kernel.

Fallback implementation of the hot numerical loops; `stormerlab._core` is
the compiled (Cython) twin with the same API and, by construction, the same
floating-point behaviour (expressions are written identically in both and
the extension is built with FMA contraction disabled).

Everything here works on plain floats; no numpy.
"""

import math

BACKEND = "python"

# terminal status codes shared by both backends
OK_TIME = 0          # reached requested end time
STOPPED_EVENT = 1    # halted at a stop-event (last record is the stopping one)
HIT_SINGULARITY = 2  # r dropped below the guard radius
STEP_UNDERFLOW = 3   # step size collapsed below the floor
STEP_LIMIT = 4       # step budget exceeded
BAD_START = 5        # right-hand side not evaluable at the initial state

# event kinds
KIND_EQ = 0           # z sign change (equatorial-plane crossing)
KIND_RADIUS = 1       # rho crosses a threshold
KIND_ESCAPE = 2       # rho reaches the escape radius (threshold, usually 2)
KIND_SINGULARITY = 3  # r < r_min guard (always terminal, built in)
KIND_THALWEG = 4      # r^3 - rho^2 sign change (potential-valley floor)

_SAFETY = 0.9
_BETA = 0.04
_EXPO1 = 0.2 - 0.75 * _BETA
_H_FLOOR = 1e-14
_RHO_TINY = 1e-12
_S_TINY = 1e-24

# Dormand-Prince 5(4) tableau, FSAL; last A row doubles as the 5th-order weights.
_C = (0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_E = (71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0,
      -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
# dense-output weights (quartic interpolant)
_D = (-12715105075.0 / 11282082432.0, 0.0, 87487479700.0 / 32700410799.0,
      -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
      -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0)


def potential(z, rho):
    """Effective potential of the reduced meridian-plane motion."""
    s = z * z + rho * rho
    sq = math.sqrt(s)
    r3 = s * sq
    b = 1.0 / rho - rho / r3
    return 0.5 * b * b


def forces(z, rho):
    """(d p_z/dt, d p_rho/dt): minus the potential gradient."""
    s = z * z + rho * rho
    sq = math.sqrt(s)
    r3 = s * sq
    r5 = r3 * s
    b = 1.0 / rho - rho / r3
    f = -3.0 * z * rho * b / r5
    g = (1.0 / (rho * rho) - 3.0 * rho * rho / r5 + 1.0 / r3) * b
    return f, g


def force_jacobian(z, rho):
    """(df/dz, df/drho, dg/drho); dg/dz equals df/drho by symmetry."""
    s = z * z + rho * rho
    sq = math.sqrt(s)
    r3 = s * sq
    r5 = r3 * s
    r7 = r5 * s
    b = 1.0 / rho - rho / r3
    bz = 3.0 * z * rho / r5
    br = -1.0 / (rho * rho) - 1.0 / r3 + 3.0 * rho * rho / r5
    bzz = 3.0 * rho / r5 - 15.0 * z * z * rho / r7
    bzr = 3.0 * z / r5 - 15.0 * z * rho * rho / r7
    brr = 2.0 / (rho * rho * rho) + 9.0 * rho / r5 - 15.0 * rho * rho * rho / r7
    dfdz = -(bz * bz + b * bzz)
    dfdr = -(br * bz + b * bzr)
    dgdr = -(br * br + b * brr)
    return dfdz, dfdr, dgdr


def energy(z, rho, pz, prho):
    return 0.5 * (pz * pz + prho * prho) + potential(z, rho)


def _rhs(dim, y, dy):
    """Phase-space derivative; dim 4 = base flow, dim 8 = base + tangent.

    Returns False when the state is outside the evaluable domain.
    """
    z = y[0]
    rho = y[1]
    if rho <= _RHO_TINY:
        return False
    s = z * z + rho * rho
    if s <= _S_TINY:
        return False
    sq = math.sqrt(s)
    r3 = s * sq
    r5 = r3 * s
    b = 1.0 / rho - rho / r3
    dy[0] = y[2]
    dy[1] = y[3]
    dy[2] = -3.0 * z * rho * b / r5
    dy[3] = (1.0 / (rho * rho) - 3.0 * rho * rho / r5 + 1.0 / r3) * b
    if dim == 8:
        r7 = r5 * s
        bz = 3.0 * z * rho / r5
        br = -1.0 / (rho * rho) - 1.0 / r3 + 3.0 * rho * rho / r5
        bzz = 3.0 * rho / r5 - 15.0 * z * z * rho / r7
        bzr = 3.0 * z / r5 - 15.0 * z * rho * rho / r7
        brr = 2.0 / (rho * rho * rho) + 9.0 * rho / r5 - 15.0 * rho * rho * rho / r7
        dfdz = -(bz * bz + b * bzz)
        dfdr = -(br * bz + b * bzr)
        dgdr = -(br * br + b * brr)
        dy[4] = y[6]
        dy[5] = y[7]
        dy[6] = dfdz * y[4] + dfdr * y[5]
        dy[7] = dfdr * y[4] + dgdr * y[5]
    return True


def _attempt_step(dim, y, h, k, ystage, y1, atol, rtol):
    """One trial DOPRI5 step from y with k[0] = f(y) already filled.

    Fills k[1..6] and y1; returns the scaled error norm, or -1.0 when a
    stage landed outside the evaluable domain.
    """
    for stage in range(1, 7):
        arow = _A[stage - 1]
        for i in range(dim):
            acc = arow[0] * k[0][i]
            for j in range(1, stage):
                acc += arow[j] * k[j][i]
            ystage[i] = y[i] + h * acc
        if not _rhs(dim, ystage, k[stage]):
            return -1.0
    # stage 7 was evaluated at the 5th-order result ystage == y1 (FSAL layout)
    for i in range(dim):
        y1[i] = ystage[i]
    err_sum = 0.0
    for i in range(dim):
        e = _E[0] * k[0][i]
        for j in range(1, 7):
            e += _E[j] * k[j][i]
        ay = -y[i] if y[i] < 0.0 else y[i]
        ay1 = -y1[i] if y1[i] < 0.0 else y1[i]
        big = ay if ay > ay1 else ay1
        sc = atol + rtol * big
        q = h * e / sc
        err_sum += q * q
    return math.sqrt(err_sum / dim)


def _fill_cont(dim, y, y1, h, k, cont):
    """Dense-output coefficients for the step just accepted."""
    for i in range(dim):
        ydiff = y1[i] - y[i]
        bspl = h * k[0][i] - ydiff
        cont[0][i] = y[i]
        cont[1][i] = ydiff
        cont[2][i] = bspl
        cont[3][i] = ydiff - h * k[6][i] - bspl
        acc = _D[0] * k[0][i]
        acc += _D[2] * k[2][i]
        acc += _D[3] * k[3][i]
        acc += _D[4] * k[4][i]
        acc += _D[5] * k[5][i]
        acc += _D[6] * k[6][i]
        cont[4][i] = h * acc
    return None


def _interp(cont, theta, i):
    th1 = 1.0 - theta
    return cont[0][i] + theta * (cont[1][i] + th1 * (cont[2][i] + theta * (cont[3][i] + th1 * cont[4][i])))


def _interp_state(cont, theta, out):
    for i in range(4):
        out[i] = _interp(cont, theta, i)
    return None


def _sign(x):
    if x > 0.0:
        return 1
    if x < 0.0:
        return -1
    return 0


def _event_value(kind, thr, z, rho):
    if kind == KIND_EQ:
        return z
    if kind == KIND_RADIUS or kind == KIND_ESCAPE:
        return rho - thr
    if kind == KIND_THALWEG:
        s = z * z + rho * rho
        return s * math.sqrt(s) - rho * rho
    # KIND_SINGULARITY
    return math.sqrt(z * z + rho * rho) - thr


def _locate(cont, kind, thr, h, theta_lo, theta_hi, ga, gb):
    """Bisect a bracketed event-function root on the dense interpolant.

    Returns theta of the root (the bracket endpoint with the smaller |g|).
    """
    lo = theta_lo
    hi = theta_hi
    glo = ga
    ghi = gb
    for _ in range(200):
        if (hi - lo) * h <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        z = _interp(cont, mid, 0)
        rho = _interp(cont, mid, 1)
        gm = _event_value(kind, thr, z, rho)
        if (glo < 0.0 and gm <= 0.0) or (glo > 0.0 and gm >= 0.0):
            lo = mid
            glo = gm
        else:
            hi = mid
            ghi = gm
    aglo = -glo if glo < 0.0 else glo
    aghi = -ghi if ghi < 0.0 else ghi
    return lo if aglo <= aghi else hi


def _controller_accept(err, facold, h, prev_rejected):
    fac11 = err ** _EXPO1 if err > 0.0 else 0.0
    fac = fac11 / (facold ** _BETA)
    fac = fac / _SAFETY
    if fac < 0.2:
        fac = 0.2
    if fac > 5.0:
        fac = 5.0
    hnew = h / fac
    if prev_rejected and hnew > h:
        hnew = h
    facold_new = err if err > 1e-4 else 1e-4
    return hnew, facold_new


def _controller_reject(err, h):
    if err < 0.0:  # invalid stage: maximal shrink
        return 0.2 * h
    fac11 = err ** _EXPO1
    fac = fac11 / _SAFETY
    if fac < 0.2:
        fac = 0.2
    if fac > 5.0:
        fac = 5.0
    return h / fac


def run(z0, rho0, pz0, prho0, t0, t_end, atol, rtol, h0, hmax, rmin,
        ev_kind, ev_thr, ev_dir, ev_stop, ev_maxcount,
        graze_tol=1e-9, sample_dt=0.0, track_lambda=False,
        max_records=1000000, max_steps=50000000):
    """Drive the 4-D flow from t0 to t_end with event detection.

    Event specs are given as parallel lists (kind, threshold, direction in
    {-1, 0, +1}, stop flag, per-spec stop-after-ordinal or 0). The r < rmin
    singularity guard is always active when rmin > 0. Radius events also
    register grazing contacts: a rho extremum within graze_tol of the
    threshold counts as a crossing in the approach direction.

    Returns (status, t, (z, rho, pz, prho), drift_rel, nsteps, nrej,
    records, samples, lam_min, lam_max) where each record is
    (spec_idx, kind, ordinal, t, z, rho, pz, prho); the singularity guard
    reports spec_idx -1.
    """
    nspec = len(ev_kind)
    y = [z0, rho0, pz0, prho0]
    y1 = [0.0, 0.0, 0.0, 0.0]
    ystage = [0.0, 0.0, 0.0, 0.0]
    ev_state = [0.0, 0.0, 0.0, 0.0]
    k = [[0.0] * 4 for _ in range(7)]
    cont = [[0.0] * 4 for _ in range(5)]
    records = []
    samples = []
    lam_min = math.inf
    lam_max = -math.inf
    nsteps = 0
    nrej = 0

    if not _rhs(4, y, k[0]):
        return (BAD_START, t0, tuple(y), 0.0, 0, 0, records, samples, lam_min, lam_max)

    h0_energy = energy(y[0], y[1], y[2], y[3])
    drift_scale = abs(h0_energy)
    if drift_scale < 1e-12:
        drift_scale = 1e-12
    max_drift = 0.0

    if track_lambda:
        lam = math.asin(y[0] / math.sqrt(y[0] * y[0] + y[1] * y[1]))
        lam_min = lam
        lam_max = lam

    # per-spec ordinal counters and carried signs
    ordinals = [0] * nspec
    last_sign = [0] * nspec
    for idx in range(nspec):
        g0 = _event_value(ev_kind[idx], ev_thr[idx], y[0], y[1])
        last_sign[idx] = _sign(g0)
        if ev_kind[idx] == KIND_ESCAPE and g0 >= 0.0:
            # already at/beyond the escape radius
            ordinals[idx] = 1
            records.append((idx, KIND_ESCAPE, 1, t0, y[0], y[1], y[2], y[3]))
            if ev_stop[idx] or ev_maxcount[idx] == 1:
                return (STOPPED_EVENT, t0, tuple(y), 0.0, 0, 0, records,
                        samples, lam_min, lam_max)
    sing_sign = 0
    if rmin > 0.0:
        gs = _event_value(KIND_SINGULARITY, rmin, y[0], y[1])
        if gs <= 0.0:
            records.append((-1, KIND_SINGULARITY, 1, t0, y[0], y[1], y[2], y[3]))
            return (HIT_SINGULARITY, t0, tuple(y), 0.0, 0, 0, records,
                    samples, lam_min, lam_max)
        sing_sign = 1

    need_dense = nspec > 0 or rmin > 0.0 or sample_dt > 0.0
    next_sample = t0 + sample_dt if sample_dt > 0.0 else math.inf

    t = t0
    h = h0 if h0 > 0.0 else 1e-4
    if h > hmax:
        h = hmax
    facold = 1e-4
    prev_rejected = False

    while True:
        rem = t_end - t
        if rem <= _H_FLOOR:
            return (OK_TIME, t, tuple(y), max_drift / drift_scale, nsteps, nrej,
                    records, samples, lam_min, lam_max)
        clamped = False
        if h >= rem:
            h = rem
            clamped = True

        err = _attempt_step(4, y, h, k, ystage, y1, atol, rtol)
        nsteps += 1
        if nsteps > max_steps:
            return (STEP_LIMIT, t, tuple(y), max_drift / drift_scale, nsteps, nrej,
                    records, samples, lam_min, lam_max)
        if err < 0.0 or err > 1.0 or err != err:
            nrej += 1
            if err != err:
                h = 0.2 * h
            else:
                h = _controller_reject(err, h)
            prev_rejected = True
            if h < _H_FLOOR:
                return (STEP_UNDERFLOW, t, tuple(y), max_drift / drift_scale,
                        nsteps, nrej, records, samples, lam_min, lam_max)
            continue

        t_new = t_end if clamped else t + h
        if need_dense:
            _fill_cont(4, y, y1, h, k, cont)

        # --- event handling over [t, t_new] ---------------------------------
        stop_status = -1
        stop_theta = 0.0
        if nspec > 0 or rmin > 0.0:
            cands = []  # (theta, spec_idx, kind, rising, graze)
            for idx in range(-1, nspec):
                if idx == -1:
                    if rmin <= 0.0:
                        continue
                    kind = KIND_SINGULARITY
                    thr = rmin
                    prev_s = sing_sign
                else:
                    kind = ev_kind[idx]
                    thr = ev_thr[idx]
                    prev_s = last_sign[idx]
                g_mid = _event_value(kind, thr, _interp(cont, 0.5, 0), _interp(cont, 0.5, 1))
                g_end = _event_value(kind, thr, y1[0], y1[1])
                s_mid = _sign(g_mid)
                s_end = _sign(g_end)
                found = False
                # sub-brackets [0, .5], [.5, 1]
                if prev_s != 0 and s_mid != 0 and prev_s != s_mid:
                    g_start = _event_value(kind, thr, y[0], y[1])
                    th = _locate(cont, kind, thr, h, 0.0, 0.5, g_start, g_mid)
                    cands.append((th, idx, kind, prev_s < 0, False))
                    found = True
                    base = s_mid
                else:
                    base = prev_s if s_mid == 0 else s_mid
                if base != 0 and s_end != 0 and base != s_end:
                    th = _locate(cont, kind, thr, h, 0.5, 1.0, g_mid, g_end)
                    cands.append((th, idx, kind, base < 0, False))
                    found = True
                elif base != 0 and s_end == 0:
                    cands.append((1.0, idx, kind, base < 0, False))
                    found = True
                    s_end = -base  # treat as having crossed
                # grazing contact for radius events: rho extremum near threshold
                if not found and kind == KIND_RADIUS:
                    p_start = y[3]
                    p_mid = _interp(cont, 0.5, 3)
                    p_end = y1[3]
                    for (ta, tb, pa, pb) in ((0.0, 0.5, p_start, p_mid), (0.5, 1.0, p_mid, p_end)):
                        if (pa < 0.0 < pb) or (pa > 0.0 > pb):
                            th = _locate_prho_zero(cont, ta, tb, h, pa, pb)
                            g_ext = _interp(cont, th, 1) - thr
                            ag = -g_ext if g_ext < 0.0 else g_ext
                            if ag <= graze_tol:
                                # "rising" for a graze = approached moving outward
                                cands.append((th, idx, kind, pa > 0.0, True))
                if idx == -1:
                    sing_sign = s_end if s_end != 0 else sing_sign
                else:
                    last_sign[idx] = s_end if s_end != 0 else last_sign[idx]
            if cands:
                cands.sort()
                for (th, idx, kind, rising, graze) in cands:
                    if th >= 1.0:
                        ev_state[0] = y1[0]
                        ev_state[1] = y1[1]
                        ev_state[2] = y1[2]
                        ev_state[3] = y1[3]
                    else:
                        _interp_state(cont, th, ev_state)
                    t_ev = t_new if th >= 1.0 else t + th * h
                    if track_lambda:
                        lam = math.asin(ev_state[0] / math.sqrt(
                            ev_state[0] * ev_state[0] + ev_state[1] * ev_state[1]))
                        if lam < lam_min:
                            lam_min = lam
                        if lam > lam_max:
                            lam_max = lam
                    if idx == -1:
                        records.append((-1, KIND_SINGULARITY, 1, t_ev,
                                        ev_state[0], ev_state[1], ev_state[2], ev_state[3]))
                        stop_status = HIT_SINGULARITY
                        stop_theta = th
                        break
                    # direction filter: for grazing events "rising" is the
                    # approach direction, for crossings the slope sign
                    d = ev_dir[idx]
                    if d == 1 and not rising:
                        continue
                    if d == -1 and rising:
                        continue
                    ordinals[idx] += 1
                    records.append((idx, kind, ordinals[idx], t_ev,
                                    ev_state[0], ev_state[1], ev_state[2], ev_state[3]))
                    if len(records) >= max_records:
                        stop_status = STOPPED_EVENT
                        stop_theta = th
                        break
                    if ev_stop[idx] or (ev_maxcount[idx] > 0 and ordinals[idx] >= ev_maxcount[idx]):
                        stop_status = STOPPED_EVENT
                        stop_theta = th
                        break

        t_final = t_new
        if stop_status >= 0:
            rec = records[-1]
            t_final = rec[3]
            y1[0] = rec[4]
            y1[1] = rec[5]
            y1[2] = rec[6]
            y1[3] = rec[7]

        # samples strictly inside (t, t_final]
        while next_sample <= t_final:
            theta = (next_sample - t) / h
            if theta > 1.0:
                theta = 1.0
            _interp_state(cont, theta, ystage)
            samples.append((next_sample, ystage[0], ystage[1], ystage[2], ystage[3]))
            next_sample += sample_dt

        hcur = energy(y1[0], y1[1], y1[2], y1[3])
        d = hcur - h0_energy
        if d < 0.0:
            d = -d
        if d > max_drift:
            max_drift = d
        if track_lambda:
            lam = math.asin(y1[0] / math.sqrt(y1[0] * y1[0] + y1[1] * y1[1]))
            if lam < lam_min:
                lam_min = lam
            if lam > lam_max:
                lam_max = lam

        if stop_status >= 0:
            return (stop_status, t_final, tuple(y1), max_drift / drift_scale,
                    nsteps, nrej, records, samples, lam_min, lam_max)

        # FSAL: stage 7 is the derivative at the accepted endpoint
        for i in range(4):
            y[i] = y1[i]
            k[0][i] = k[6][i]
        t = t_new
        hnew, facold = _controller_accept(err, facold, h, prev_rejected)
        prev_rejected = False
        h = hnew if hnew < hmax else hmax


def _locate_prho_zero(cont, ta, tb, h, pa, pb):
    """Bisect a p_rho sign change on the interpolant (rho extremum)."""
    lo = ta
    hi = tb
    plo = pa
    for _ in range(200):
        if (hi - lo) * h <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        pm = _interp(cont, mid, 3)
        if (plo < 0.0 and pm <= 0.0) or (plo > 0.0 and pm >= 0.0):
            lo = mid
            plo = pm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def run_mlce(z0, rho0, pz0, prho0, v0, t0, total_time, renorm_dt,
             atol, rtol, h0, hmax, rmin, escape_rho=2.0,
             collect_history=False, max_steps=500000000):
    """Evolve base flow plus one tangent vector, renormalizing periodically.

    Returns (status, t, (z, rho, pz, prho), (v0..v3), sum_logs, renorm_count,
    hist_t, hist_est). The running estimate recorded in the history is
    sum_logs / elapsed at each renormalization. renorm_dt <= 0 disables
    renormalization (plain tangent-flow propagation). escape_rho <= 0
    disables the escape monitor.
    """
    y = [z0, rho0, pz0, prho0, v0[0], v0[1], v0[2], v0[3]]
    y1 = [0.0] * 8
    ystage = [0.0] * 8
    k = [[0.0] * 8 for _ in range(7)]
    hist_t = []
    hist_est = []
    sum_logs = 0.0
    count = 0
    nsteps = 0

    if not _rhs(8, y, k[0]):
        return (BAD_START, t0, (z0, rho0, pz0, prho0), tuple(v0), 0.0, 0, hist_t, hist_est)

    t_target = t0 + total_time
    next_renorm = t0 + renorm_dt if renorm_dt > 0.0 else math.inf

    t = t0
    h = h0 if h0 > 0.0 else 1e-4
    if h > hmax:
        h = hmax
    facold = 1e-4
    prev_rejected = False
    status = OK_TIME

    while True:
        rem = t_target - t
        if rem <= _H_FLOOR:
            break
        stop_at = next_renorm if next_renorm < t_target else t_target
        rem = stop_at - t
        clamped = False
        if h >= rem:
            h = rem
            clamped = True

        err = _attempt_step(8, y, h, k, ystage, y1, atol, rtol)
        nsteps += 1
        if nsteps > max_steps:
            status = STEP_LIMIT
            break
        if err < 0.0 or err > 1.0 or err != err:
            if err != err:
                h = 0.2 * h
            else:
                h = _controller_reject(err, h)
            prev_rejected = True
            if h < _H_FLOOR:
                status = STEP_UNDERFLOW
                break
            continue

        t_new = stop_at if clamped else t + h
        for i in range(8):
            y[i] = y1[i]
            k[0][i] = k[6][i]
        t = t_new
        hnew, facold = _controller_accept(err, facold, h, prev_rejected)
        prev_rejected = False
        h = hnew if hnew < hmax else hmax

        if rmin > 0.0:
            r = math.sqrt(y[0] * y[0] + y[1] * y[1])
            if r < rmin:
                status = HIT_SINGULARITY
                break
        if escape_rho > 0.0 and y[1] >= escape_rho:
            status = STOPPED_EVENT
            break

        if t >= next_renorm - _H_FLOOR and renorm_dt > 0.0:
            norm = math.sqrt(y[4] * y[4] + y[5] * y[5] + y[6] * y[6] + y[7] * y[7])
            sum_logs += math.log(norm)
            inv = 1.0 / norm
            y[4] *= inv
            y[5] *= inv
            y[6] *= inv
            y[7] *= inv
            # rescale the tangent part of the FSAL derivative accordingly
            k[0][4] *= inv
            k[0][5] *= inv
            k[0][6] *= inv
            k[0][7] *= inv
            count += 1
            if collect_history:
                hist_t.append(t - t0)
                hist_est.append(sum_logs / (t - t0))
            next_renorm += renorm_dt

    return (status, t, (y[0], y[1], y[2], y[3]), (y[4], y[5], y[6], y[7]),
            sum_logs, count, hist_t, hist_est)
