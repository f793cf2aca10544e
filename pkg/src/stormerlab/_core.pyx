# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled integration kernel.

Statement-for-statement twin of ``stormerlab._purepy`` (see that module for
the commented reference implementation); the extension is built without FMA
contraction so both backends produce identical floating-point results.
"""

from libc.math cimport sqrt, asin, log, fabs, pow, isnan

BACKEND = "compiled"

OK_TIME = 0
STOPPED_EVENT = 1
HIT_SINGULARITY = 2
STEP_UNDERFLOW = 3
STEP_LIMIT = 4
BAD_START = 5

KIND_EQ = 0
KIND_RADIUS = 1
KIND_ESCAPE = 2
KIND_SINGULARITY = 3
KIND_THALWEG = 4

cdef int _K_EQ = 0
cdef int _K_RADIUS = 1
cdef int _K_ESCAPE = 2
cdef int _K_SING = 3
cdef int _K_THALWEG = 4

cdef double _SAFETY = 0.9
cdef double _BETA = 0.04
cdef double _EXPO1 = 0.2 - 0.75 * 0.04
cdef double _H_FLOOR = 1e-14
cdef double _RHO_TINY = 1e-12
cdef double _S_TINY = 1e-24
cdef double _INF = float("inf")

cdef int _MAX_SPECS = 16
cdef int _MAX_CANDS = 128


def potential(double z, double rho):
    """Effective potential of the reduced meridian-plane motion."""
    cdef double s = z * z + rho * rho
    cdef double sq = sqrt(s)
    cdef double r3 = s * sq
    cdef double b = 1.0 / rho - rho / r3
    return 0.5 * b * b


def forces(double z, double rho):
    """(d p_z/dt, d p_rho/dt): minus the potential gradient."""
    cdef double s = z * z + rho * rho
    cdef double sq = sqrt(s)
    cdef double r3 = s * sq
    cdef double r5 = r3 * s
    cdef double b = 1.0 / rho - rho / r3
    cdef double f = -3.0 * z * rho * b / r5
    cdef double g = (1.0 / (rho * rho) - 3.0 * rho * rho / r5 + 1.0 / r3) * b
    return f, g


def force_jacobian(double z, double rho):
    """(df/dz, df/drho, dg/drho); dg/dz equals df/drho by symmetry."""
    cdef double s = z * z + rho * rho
    cdef double sq = sqrt(s)
    cdef double r3 = s * sq
    cdef double r5 = r3 * s
    cdef double r7 = r5 * s
    cdef double b = 1.0 / rho - rho / r3
    cdef double bz = 3.0 * z * rho / r5
    cdef double br = -1.0 / (rho * rho) - 1.0 / r3 + 3.0 * rho * rho / r5
    cdef double bzz = 3.0 * rho / r5 - 15.0 * z * z * rho / r7
    cdef double bzr = 3.0 * z / r5 - 15.0 * z * rho * rho / r7
    cdef double brr = 2.0 / (rho * rho * rho) + 9.0 * rho / r5 - 15.0 * rho * rho * rho / r7
    cdef double dfdz = -(bz * bz + b * bzz)
    cdef double dfdr = -(br * bz + b * bzr)
    cdef double dgdr = -(br * br + b * brr)
    return dfdz, dfdr, dgdr


def energy(double z, double rho, double pz, double prho):
    cdef double s = z * z + rho * rho
    cdef double sq = sqrt(s)
    cdef double r3 = s * sq
    cdef double b = 1.0 / rho - rho / r3
    return 0.5 * (pz * pz + prho * prho) + 0.5 * b * b


cdef inline double _energy_c(double z, double rho, double pz, double prho) nogil:
    cdef double s = z * z + rho * rho
    cdef double sq = sqrt(s)
    cdef double r3 = s * sq
    cdef double b = 1.0 / rho - rho / r3
    return 0.5 * (pz * pz + prho * prho) + 0.5 * b * b


cdef inline bint _rhs(int dim, double* y, double* dy) nogil:
    cdef double z = y[0]
    cdef double rho = y[1]
    cdef double s, sq, r3, r5, r7, b, bz, br, bzz, bzr, brr, dfdz, dfdr, dgdr
    if rho <= _RHO_TINY:
        return 0
    s = z * z + rho * rho
    if s <= _S_TINY:
        return 0
    sq = sqrt(s)
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
    return 1


cdef double _attempt_step(int dim, double* y, double h, double k[7][8],
                          double* ystage, double* y1,
                          double atol, double rtol) nogil:
    cdef int i
    cdef double acc, e, sc, q, ay, ay1, big
    cdef double err_sum = 0.0

    for i in range(dim):
        acc = 0.2 * k[0][i]
        ystage[i] = y[i] + h * acc
    if not _rhs(dim, ystage, k[1]):
        return -1.0
    for i in range(dim):
        acc = (3.0 / 40.0) * k[0][i]
        acc += (9.0 / 40.0) * k[1][i]
        ystage[i] = y[i] + h * acc
    if not _rhs(dim, ystage, k[2]):
        return -1.0
    for i in range(dim):
        acc = (44.0 / 45.0) * k[0][i]
        acc += (-56.0 / 15.0) * k[1][i]
        acc += (32.0 / 9.0) * k[2][i]
        ystage[i] = y[i] + h * acc
    if not _rhs(dim, ystage, k[3]):
        return -1.0
    for i in range(dim):
        acc = (19372.0 / 6561.0) * k[0][i]
        acc += (-25360.0 / 2187.0) * k[1][i]
        acc += (64448.0 / 6561.0) * k[2][i]
        acc += (-212.0 / 729.0) * k[3][i]
        ystage[i] = y[i] + h * acc
    if not _rhs(dim, ystage, k[4]):
        return -1.0
    for i in range(dim):
        acc = (9017.0 / 3168.0) * k[0][i]
        acc += (-355.0 / 33.0) * k[1][i]
        acc += (46732.0 / 5247.0) * k[2][i]
        acc += (49.0 / 176.0) * k[3][i]
        acc += (-5103.0 / 18656.0) * k[4][i]
        ystage[i] = y[i] + h * acc
    if not _rhs(dim, ystage, k[5]):
        return -1.0
    for i in range(dim):
        acc = (35.0 / 384.0) * k[0][i]
        acc += 0.0 * k[1][i]
        acc += (500.0 / 1113.0) * k[2][i]
        acc += (125.0 / 192.0) * k[3][i]
        acc += (-2187.0 / 6784.0) * k[4][i]
        acc += (11.0 / 84.0) * k[5][i]
        ystage[i] = y[i] + h * acc
    if not _rhs(dim, ystage, k[6]):
        return -1.0

    for i in range(dim):
        y1[i] = ystage[i]
    for i in range(dim):
        e = (71.0 / 57600.0) * k[0][i]
        e += 0.0 * k[1][i]
        e += (-71.0 / 16695.0) * k[2][i]
        e += (71.0 / 1920.0) * k[3][i]
        e += (-17253.0 / 339200.0) * k[4][i]
        e += (22.0 / 525.0) * k[5][i]
        e += (-1.0 / 40.0) * k[6][i]
        ay = -y[i] if y[i] < 0.0 else y[i]
        ay1 = -y1[i] if y1[i] < 0.0 else y1[i]
        big = ay if ay > ay1 else ay1
        sc = atol + rtol * big
        q = h * e / sc
        err_sum += q * q
    return sqrt(err_sum / dim)


cdef void _fill_cont(int dim, double* y, double* y1, double h,
                     double k[7][8], double cont[5][8]) nogil:
    cdef int i
    cdef double ydiff, bspl, acc
    for i in range(dim):
        ydiff = y1[i] - y[i]
        bspl = h * k[0][i] - ydiff
        cont[0][i] = y[i]
        cont[1][i] = ydiff
        cont[2][i] = bspl
        cont[3][i] = ydiff - h * k[6][i] - bspl
        acc = (-12715105075.0 / 11282082432.0) * k[0][i]
        acc += (87487479700.0 / 32700410799.0) * k[2][i]
        acc += (-10690763975.0 / 1880347072.0) * k[3][i]
        acc += (701980252875.0 / 199316789632.0) * k[4][i]
        acc += (-1453857185.0 / 822651844.0) * k[5][i]
        acc += (69997945.0 / 29380423.0) * k[6][i]
        cont[4][i] = h * acc


cdef inline double _interp(double cont[5][8], double theta, int i) nogil:
    cdef double th1 = 1.0 - theta
    return cont[0][i] + theta * (cont[1][i] + th1 * (cont[2][i] + theta * (cont[3][i] + th1 * cont[4][i])))


cdef inline void _interp_state(double cont[5][8], double theta, double* out) nogil:
    cdef int i
    for i in range(4):
        out[i] = _interp(cont, theta, i)


cdef inline int _sign(double x) nogil:
    if x > 0.0:
        return 1
    if x < 0.0:
        return -1
    return 0


cdef inline double _event_value(int kind, double thr, double z, double rho) nogil:
    cdef double s
    if kind == _K_EQ:
        return z
    if kind == _K_RADIUS or kind == _K_ESCAPE:
        return rho - thr
    if kind == _K_THALWEG:
        s = z * z + rho * rho
        return s * sqrt(s) - rho * rho
    return sqrt(z * z + rho * rho) - thr


cdef double _locate(double cont[5][8], int kind, double thr, double h,
                    double theta_lo, double theta_hi, double ga, double gb) nogil:
    cdef double lo = theta_lo
    cdef double hi = theta_hi
    cdef double glo = ga
    cdef double ghi = gb
    cdef double mid, z, rho, gm, aglo, aghi
    cdef int it
    for it in range(200):
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


cdef double _locate_prho_zero(double cont[5][8], double ta, double tb, double h,
                              double pa, double pb) nogil:
    cdef double lo = ta
    cdef double hi = tb
    cdef double plo = pa
    cdef double mid, pm
    cdef int it
    for it in range(200):
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


cdef inline double _ctrl_accept(double err, double* facold, double h, bint prev_rejected) nogil:
    cdef double fac11 = pow(err, _EXPO1) if err > 0.0 else 0.0
    cdef double fac = fac11 / pow(facold[0], _BETA)
    cdef double hnew
    fac = fac / _SAFETY
    if fac < 0.2:
        fac = 0.2
    if fac > 5.0:
        fac = 5.0
    hnew = h / fac
    if prev_rejected and hnew > h:
        hnew = h
    facold[0] = err if err > 1e-4 else 1e-4
    return hnew


cdef inline double _ctrl_reject(double err, double h) nogil:
    cdef double fac11, fac
    if err < 0.0:
        return 0.2 * h
    fac11 = pow(err, _EXPO1)
    fac = fac11 / _SAFETY
    if fac < 0.2:
        fac = 0.2
    if fac > 5.0:
        fac = 5.0
    return h / fac


def run(double z0, double rho0, double pz0, double prho0, double t0, double t_end,
        double atol, double rtol, double h0, double hmax, double rmin,
        ev_kind, ev_thr, ev_dir, ev_stop, ev_maxcount,
        double graze_tol=1e-9, double sample_dt=0.0, bint track_lambda=False,
        long max_records=1000000, long max_steps=50000000):
    """Drive the 4-D flow with event detection; see _purepy.run for the contract."""
    cdef int nspec = len(ev_kind)
    if nspec > _MAX_SPECS:
        raise ValueError("too many event specs")

    cdef int kinds[16]
    cdef double thrs[16]
    cdef int dirs[16]
    cdef bint stops[16]
    cdef long maxcounts[16]
    cdef long ordinals[16]
    cdef int last_sign[16]
    cdef int i, idx
    for i in range(nspec):
        kinds[i] = ev_kind[i]
        thrs[i] = ev_thr[i]
        dirs[i] = ev_dir[i]
        stops[i] = 1 if ev_stop[i] else 0
        maxcounts[i] = ev_maxcount[i]
        ordinals[i] = 0
        last_sign[i] = 0

    cdef double y[4]
    cdef double y1[4]
    cdef double ystage[4]
    cdef double ev_state[4]
    cdef double k[7][8]
    cdef double cont[5][8]
    y[0] = z0
    y[1] = rho0
    y[2] = pz0
    y[3] = prho0

    records = []
    samples = []
    cdef double lam_min = _INF
    cdef double lam_max = -_INF
    cdef long nsteps = 0
    cdef long nrej = 0

    if not _rhs(4, y, k[0]):
        return (BAD_START, t0, (y[0], y[1], y[2], y[3]), 0.0, 0, 0,
                records, samples, lam_min, lam_max)

    cdef double h0_energy = _energy_c(y[0], y[1], y[2], y[3])
    cdef double drift_scale = fabs(h0_energy)
    if drift_scale < 1e-12:
        drift_scale = 1e-12
    cdef double max_drift = 0.0
    cdef double lam

    if track_lambda:
        lam = asin(y[0] / sqrt(y[0] * y[0] + y[1] * y[1]))
        lam_min = lam
        lam_max = lam

    cdef double g0, gs
    for idx in range(nspec):
        g0 = _event_value(kinds[idx], thrs[idx], y[0], y[1])
        last_sign[idx] = _sign(g0)
        if kinds[idx] == _K_ESCAPE and g0 >= 0.0:
            ordinals[idx] = 1
            records.append((idx, _K_ESCAPE, 1, t0, y[0], y[1], y[2], y[3]))
            if stops[idx] or maxcounts[idx] == 1:
                return (STOPPED_EVENT, t0, (y[0], y[1], y[2], y[3]), 0.0, 0, 0,
                        records, samples, lam_min, lam_max)
    cdef int sing_sign = 0
    if rmin > 0.0:
        gs = _event_value(_K_SING, rmin, y[0], y[1])
        if gs <= 0.0:
            records.append((-1, _K_SING, 1, t0, y[0], y[1], y[2], y[3]))
            return (HIT_SINGULARITY, t0, (y[0], y[1], y[2], y[3]), 0.0, 0, 0,
                    records, samples, lam_min, lam_max)
        sing_sign = 1

    cdef bint need_dense = nspec > 0 or rmin > 0.0 or sample_dt > 0.0
    cdef double next_sample = t0 + sample_dt if sample_dt > 0.0 else _INF

    cdef double t = t0
    cdef double h = h0 if h0 > 0.0 else 1e-4
    if h > hmax:
        h = hmax
    cdef double facold = 1e-4
    cdef bint prev_rejected = 0

    # per-step candidate buffers
    cdef double cand_th[128]
    cdef int cand_idx[128]
    cdef int cand_kind[128]
    cdef bint cand_rising[128]
    cdef int ncand, ci, cj
    cdef double tmp_th
    cdef int tmp_i, tmp_k
    cdef bint tmp_r

    cdef double rem, err, t_new, t_final, g_mid, g_end, g_start, th, t_ev, theta
    cdef double p_start, p_mid, p_end, g_ext, ag, ta, tb, pa, pb
    cdef double hcur, d, hnew
    cdef int s_mid, s_end, base, prev_s, kind_c, stop_status, d_i
    cdef double thr_c
    cdef bint clamped, found, rising
    cdef long nrec

    while True:
        rem = t_end - t
        if rem <= _H_FLOOR:
            return (OK_TIME, t, (y[0], y[1], y[2], y[3]), max_drift / drift_scale,
                    nsteps, nrej, records, samples, lam_min, lam_max)
        clamped = 0
        if h >= rem:
            h = rem
            clamped = 1

        err = _attempt_step(4, y, h, k, ystage, y1, atol, rtol)
        nsteps += 1
        if nsteps > max_steps:
            return (STEP_LIMIT, t, (y[0], y[1], y[2], y[3]), max_drift / drift_scale,
                    nsteps, nrej, records, samples, lam_min, lam_max)
        if err < 0.0 or err > 1.0 or isnan(err):
            nrej += 1
            if isnan(err):
                h = 0.2 * h
            else:
                h = _ctrl_reject(err, h)
            prev_rejected = 1
            if h < _H_FLOOR:
                return (STEP_UNDERFLOW, t, (y[0], y[1], y[2], y[3]),
                        max_drift / drift_scale, nsteps, nrej, records, samples,
                        lam_min, lam_max)
            continue

        t_new = t_end if clamped else t + h
        if need_dense:
            _fill_cont(4, y, y1, h, k, cont)

        stop_status = -1
        if nspec > 0 or rmin > 0.0:
            ncand = 0
            for idx in range(-1, nspec):
                if idx == -1:
                    if rmin <= 0.0:
                        continue
                    kind_c = _K_SING
                    thr_c = rmin
                    prev_s = sing_sign
                else:
                    kind_c = kinds[idx]
                    thr_c = thrs[idx]
                    prev_s = last_sign[idx]
                g_mid = _event_value(kind_c, thr_c, _interp(cont, 0.5, 0), _interp(cont, 0.5, 1))
                g_end = _event_value(kind_c, thr_c, y1[0], y1[1])
                s_mid = _sign(g_mid)
                s_end = _sign(g_end)
                found = 0
                if prev_s != 0 and s_mid != 0 and prev_s != s_mid:
                    g_start = _event_value(kind_c, thr_c, y[0], y[1])
                    th = _locate(cont, kind_c, thr_c, h, 0.0, 0.5, g_start, g_mid)
                    if ncand < _MAX_CANDS:
                        cand_th[ncand] = th
                        cand_idx[ncand] = idx
                        cand_kind[ncand] = kind_c
                        cand_rising[ncand] = prev_s < 0
                        ncand += 1
                    found = 1
                    base = s_mid
                else:
                    base = prev_s if s_mid == 0 else s_mid
                if base != 0 and s_end != 0 and base != s_end:
                    th = _locate(cont, kind_c, thr_c, h, 0.5, 1.0, g_mid, g_end)
                    if ncand < _MAX_CANDS:
                        cand_th[ncand] = th
                        cand_idx[ncand] = idx
                        cand_kind[ncand] = kind_c
                        cand_rising[ncand] = base < 0
                        ncand += 1
                    found = 1
                elif base != 0 and s_end == 0:
                    if ncand < _MAX_CANDS:
                        cand_th[ncand] = 1.0
                        cand_idx[ncand] = idx
                        cand_kind[ncand] = kind_c
                        cand_rising[ncand] = base < 0
                        ncand += 1
                    found = 1
                    s_end = -base
                if (not found) and kind_c == _K_RADIUS:
                    p_start = y[3]
                    p_mid = _interp(cont, 0.5, 3)
                    p_end = y1[3]
                    for ci in range(2):
                        if ci == 0:
                            ta = 0.0
                            tb = 0.5
                            pa = p_start
                            pb = p_mid
                        else:
                            ta = 0.5
                            tb = 1.0
                            pa = p_mid
                            pb = p_end
                        if (pa < 0.0 < pb) or (pa > 0.0 > pb):
                            th = _locate_prho_zero(cont, ta, tb, h, pa, pb)
                            g_ext = _interp(cont, th, 1) - thr_c
                            ag = -g_ext if g_ext < 0.0 else g_ext
                            if ag <= graze_tol and ncand < _MAX_CANDS:
                                cand_th[ncand] = th
                                cand_idx[ncand] = idx
                                cand_kind[ncand] = kind_c
                                cand_rising[ncand] = pa > 0.0
                                ncand += 1
                if idx == -1:
                    sing_sign = s_end if s_end != 0 else sing_sign
                else:
                    last_sign[idx] = s_end if s_end != 0 else last_sign[idx]

            if ncand > 0:
                # insertion sort by (theta, spec index): stable, tiny n
                for ci in range(1, ncand):
                    tmp_th = cand_th[ci]
                    tmp_i = cand_idx[ci]
                    tmp_k = cand_kind[ci]
                    tmp_r = cand_rising[ci]
                    cj = ci - 1
                    while cj >= 0 and (cand_th[cj] > tmp_th or
                                       (cand_th[cj] == tmp_th and cand_idx[cj] > tmp_i)):
                        cand_th[cj + 1] = cand_th[cj]
                        cand_idx[cj + 1] = cand_idx[cj]
                        cand_kind[cj + 1] = cand_kind[cj]
                        cand_rising[cj + 1] = cand_rising[cj]
                        cj -= 1
                    cand_th[cj + 1] = tmp_th
                    cand_idx[cj + 1] = tmp_i
                    cand_kind[cj + 1] = tmp_k
                    cand_rising[cj + 1] = tmp_r
                for ci in range(ncand):
                    th = cand_th[ci]
                    idx = cand_idx[ci]
                    kind_c = cand_kind[ci]
                    rising = cand_rising[ci]
                    if th >= 1.0:
                        ev_state[0] = y1[0]
                        ev_state[1] = y1[1]
                        ev_state[2] = y1[2]
                        ev_state[3] = y1[3]
                    else:
                        _interp_state(cont, th, ev_state)
                    t_ev = t_new if th >= 1.0 else t + th * h
                    if track_lambda:
                        lam = asin(ev_state[0] / sqrt(
                            ev_state[0] * ev_state[0] + ev_state[1] * ev_state[1]))
                        if lam < lam_min:
                            lam_min = lam
                        if lam > lam_max:
                            lam_max = lam
                    if idx == -1:
                        records.append((-1, _K_SING, 1, t_ev,
                                        ev_state[0], ev_state[1], ev_state[2], ev_state[3]))
                        stop_status = HIT_SINGULARITY
                        break
                    d_i = dirs[idx]
                    if d_i == 1 and not rising:
                        continue
                    if d_i == -1 and rising:
                        continue
                    ordinals[idx] += 1
                    records.append((idx, kind_c, ordinals[idx], t_ev,
                                    ev_state[0], ev_state[1], ev_state[2], ev_state[3]))
                    nrec = len(records)
                    if nrec >= max_records:
                        stop_status = STOPPED_EVENT
                        break
                    if stops[idx] or (maxcounts[idx] > 0 and ordinals[idx] >= maxcounts[idx]):
                        stop_status = STOPPED_EVENT
                        break

        t_final = t_new
        if stop_status >= 0:
            rec = records[len(records) - 1]
            t_final = rec[3]
            y1[0] = rec[4]
            y1[1] = rec[5]
            y1[2] = rec[6]
            y1[3] = rec[7]

        while next_sample <= t_final:
            theta = (next_sample - t) / h
            if theta > 1.0:
                theta = 1.0
            _interp_state(cont, theta, ystage)
            samples.append((next_sample, ystage[0], ystage[1], ystage[2], ystage[3]))
            next_sample += sample_dt

        hcur = _energy_c(y1[0], y1[1], y1[2], y1[3])
        d = hcur - h0_energy
        if d < 0.0:
            d = -d
        if d > max_drift:
            max_drift = d
        if track_lambda:
            lam = asin(y1[0] / sqrt(y1[0] * y1[0] + y1[1] * y1[1]))
            if lam < lam_min:
                lam_min = lam
            if lam > lam_max:
                lam_max = lam

        if stop_status >= 0:
            return (stop_status, t_final, (y1[0], y1[1], y1[2], y1[3]),
                    max_drift / drift_scale, nsteps, nrej, records, samples,
                    lam_min, lam_max)

        for i in range(4):
            y[i] = y1[i]
            k[0][i] = k[6][i]
        t = t_new
        hnew = _ctrl_accept(err, &facold, h, prev_rejected)
        prev_rejected = 0
        h = hnew if hnew < hmax else hmax


def run_mlce(double z0, double rho0, double pz0, double prho0, v0,
             double t0, double total_time, double renorm_dt,
             double atol, double rtol, double h0, double hmax, double rmin,
             double escape_rho=2.0, bint collect_history=False,
             long max_steps=500000000):
    """Base flow + tangent vector with periodic renormalization; see _purepy."""
    cdef double y[8]
    cdef double y1[8]
    cdef double ystage[8]
    cdef double k[7][8]
    cdef int i
    y[0] = z0
    y[1] = rho0
    y[2] = pz0
    y[3] = prho0
    y[4] = v0[0]
    y[5] = v0[1]
    y[6] = v0[2]
    y[7] = v0[3]

    hist_t = []
    hist_est = []
    cdef double sum_logs = 0.0
    cdef long count = 0
    cdef long nsteps = 0

    if not _rhs(8, y, k[0]):
        return (BAD_START, t0, (z0, rho0, pz0, prho0),
                (y[4], y[5], y[6], y[7]), 0.0, 0, hist_t, hist_est)

    cdef double t_target = t0 + total_time
    cdef double next_renorm = t0 + renorm_dt if renorm_dt > 0.0 else _INF

    cdef double t = t0
    cdef double h = h0 if h0 > 0.0 else 1e-4
    if h > hmax:
        h = hmax
    cdef double facold = 1e-4
    cdef bint prev_rejected = 0
    cdef int status = OK_TIME
    cdef double rem, stop_at, err, t_new, r, norm, inv, hnew
    cdef bint clamped

    while True:
        rem = t_target - t
        if rem <= _H_FLOOR:
            break
        stop_at = next_renorm if next_renorm < t_target else t_target
        rem = stop_at - t
        clamped = 0
        if h >= rem:
            h = rem
            clamped = 1

        err = _attempt_step(8, y, h, k, ystage, y1, atol, rtol)
        nsteps += 1
        if nsteps > max_steps:
            status = STEP_LIMIT
            break
        if err < 0.0 or err > 1.0 or isnan(err):
            if isnan(err):
                h = 0.2 * h
            else:
                h = _ctrl_reject(err, h)
            prev_rejected = 1
            if h < _H_FLOOR:
                status = STEP_UNDERFLOW
                break
            continue

        t_new = stop_at if clamped else t + h
        for i in range(8):
            y[i] = y1[i]
            k[0][i] = k[6][i]
        t = t_new
        hnew = _ctrl_accept(err, &facold, h, prev_rejected)
        prev_rejected = 0
        h = hnew if hnew < hmax else hmax

        if rmin > 0.0:
            r = sqrt(y[0] * y[0] + y[1] * y[1])
            if r < rmin:
                status = HIT_SINGULARITY
                break
        if escape_rho > 0.0 and y[1] >= escape_rho:
            status = STOPPED_EVENT
            break

        if t >= next_renorm - _H_FLOOR and renorm_dt > 0.0:
            norm = sqrt(y[4] * y[4] + y[5] * y[5] + y[6] * y[6] + y[7] * y[7])
            sum_logs += log(norm)
            inv = 1.0 / norm
            y[4] *= inv
            y[5] *= inv
            y[6] *= inv
            y[7] *= inv
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
