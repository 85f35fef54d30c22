"""Compiled Dormand-Prince 5(4) integrator for the six-compartment system.

The axon densities are integrated in coordinates that keep them inside their
invariant intervals by construction::

    u = artanh(A1 / tauA1),   du/dt = (alpha1 Q1 + alpha2 Q2 - alpha3 Q3) / tauA1
    v = logit(A2 / tauA2),    dv/dt = alphabar2 Q2 + alphabar3 Q3

Both right-hand sides are independent of (u, v), so the transformed equations
are exact reformulations. Boundary values map to +-inf, which the scheme
propagates unchanged (an infinite coordinate with a finite derivative stays
infinite); the error norm skips non-finite components.

The parameter array follows ``model.PARAM_NAMES``.
"""

import math

import numpy as np
from numba import njit

OK = 0
STEP_UNDERFLOW = 1
INVARIANT = 2
NON_FINITE = 3
MAX_STEPS = 4
DEGENERATE = 5

VIOLATION_TOL = 1e-9
MIN_STEP = 1e-12

# Dormand-Prince 5(4) tableau, error weights and quartic dense-output matrix.
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

GL_X, GL_W = np.polynomial.legendre.leggauss(5)

# Integrand components: 0..5 raw state, 6..9 proportion of Q0..Q3.
PROP0 = 6


@njit(cache=True)
def sigmoid(v):
    if v >= 0.0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


@njit(cache=True)
def to_original(z, p, out):
    for i in range(4):
        out[i] = z[i]
    out[4] = p[10] * math.tanh(z[4])
    out[5] = p[11] * sigmoid(z[5])


@njit(cache=True)
def rhs_original(y, p, out):
    """Right-hand side in the original coordinates (no invariant checks)."""
    q0, q1, q2, q3, a1, a2 = y[0], y[1], y[2], y[3], y[4], y[5]
    eps = p[20]
    r = 0.5 * (1.0 + a1 / math.sqrt(a1 * a1 + eps))
    s = q2 + q3
    f0 = p[0] * (1.0 + p[7] * s / (1.0 + s))
    f1 = p[1] * (1.0 - p[5] * a1 * r)
    f2 = p[2] * (1.0 - p[6] * a1 * r + p[8] * a2)
    lg = 1.0 - s / p[9] + a1 / p[12] + a2 / p[13]
    out[0] = -f0 * q0
    out[1] = f0 * q0 - f1 * q1
    out[2] = p[3] * q2 * lg + f1 * q1 - f2 * q2
    out[3] = p[4] * q3 * lg + f2 * q2
    ra = a1 / p[10] if p[10] > 0.0 else 0.0
    out[4] = (p[14] * q1 + p[15] * q2 - p[16] * q3) * (1.0 + ra) * (1.0 - ra)
    ra2 = a2 / p[11] if p[11] > 0.0 else 0.0
    out[5] = (p[17] * q2 + p[18] * q3) * a2 * (1.0 - ra2)


@njit(cache=True)
def rhs_transformed(z, p, out):
    q0, q1, q2, q3 = z[0], z[1], z[2], z[3]
    a1 = p[10] * math.tanh(z[4])
    a2 = p[11] * sigmoid(z[5])
    eps = p[20]
    r = 0.5 * (1.0 + a1 / math.sqrt(a1 * a1 + eps))
    s = q2 + q3
    f0 = p[0] * (1.0 + p[7] * s / (1.0 + s))
    f1 = p[1] * (1.0 - p[5] * a1 * r)
    f2 = p[2] * (1.0 - p[6] * a1 * r + p[8] * a2)
    lg = 1.0 - s / p[9] + a1 / p[12] + a2 / p[13]
    out[0] = -f0 * q0
    out[1] = f0 * q0 - f1 * q1
    out[2] = p[3] * q2 * lg + f1 * q1 - f2 * q2
    out[3] = p[4] * q3 * lg + f2 * q2
    out[4] = (p[14] * q1 + p[15] * q2 - p[16] * q3) / p[10] if p[10] > 0.0 else 0.0
    out[5] = p[17] * q2 + p[18] * q3 if p[11] > 0.0 else 0.0


@njit(cache=True)
def error_norm(err, y0, y1, rtol, atol):
    acc = 0.0
    n = 0
    for i in range(err.shape[0]):
        if math.isfinite(y0[i]) and math.isfinite(y1[i]) and math.isfinite(err[i]):
            sc = atol + rtol * max(abs(y0[i]), abs(y1[i]))
            acc += (err[i] / sc) ** 2
            n += 1
    if n == 0:
        return 0.0
    return math.sqrt(acc / n)


@njit(cache=True)
def initial_step(z0, f0, p, rtol, atol, max_step):
    n = z0.shape[0]
    d0 = 0.0
    d1 = 0.0
    m = 0
    for i in range(n):
        if math.isfinite(z0[i]):
            sc = atol + rtol * abs(z0[i])
            d0 += (z0[i] / sc) ** 2
            d1 += (f0[i] / sc) ** 2
            m += 1
    d0 = math.sqrt(d0 / m)
    d1 = math.sqrt(d1 / m)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, max_step)
    z1 = np.empty(n)
    for i in range(n):
        z1[i] = z0[i] + h0 * f0[i]
    f1 = np.empty(n)
    rhs_transformed(z1, p, f1)
    d2 = 0.0
    for i in range(n):
        if math.isfinite(z0[i]):
            sc = atol + rtol * abs(z0[i])
            d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / m) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, max_step)


@njit(cache=True)
def dense_eval(z0, h, q, theta, out):
    t2 = theta * theta
    t3 = t2 * theta
    t4 = t3 * theta
    for i in range(z0.shape[0]):
        out[i] = z0[i] + h * (q[i, 0] * theta + q[i, 1] * t2 + q[i, 2] * t3 + q[i, 3] * t4)


@njit(cache=True)
def integrand(y, comp, target, power):
    if comp >= PROP0:
        tot = y[0] + y[1] + y[2] + y[3]
        if not tot > 0.0:
            return math.nan
        x = y[comp - PROP0] / tot
    else:
        x = y[comp]
    d = x - target
    if power == 1:
        return d
    return d * d


@njit(cache=True)
def accumulate(t, h, z0, q, p, lo, hi, comp, target, power, nsub, acc, zt, yt):
    """Add the Gauss-Legendre contributions of the step [t, t+h]."""
    ok = True
    for j in range(lo.shape[0]):
        a = max(t, lo[j])
        b = min(t + h, hi[j])
        if b <= a:
            continue
        w = (b - a) / nsub
        for s in range(nsub):
            mid = a + (s + 0.5) * w
            for g in range(GL_X.shape[0]):
                tg = mid + 0.5 * w * GL_X[g]
                dense_eval(z0, h, q, (tg - t) / h, zt)
                to_original(zt, p, yt)
                v = integrand(yt, comp[j], target[j], power[j])
                if not math.isfinite(v):
                    ok = False
                acc[j] += 0.5 * w * GL_W[g] * v
    return ok


@njit(cache=True)
def dopri(p, z_init, t0, t_end, rtol, atol, max_step, h_init, project, max_steps,
          store, lo, hi, comp, target, power, nsub):
    """Integrate from t0 to t_end.

    Returns (status, t_fail, comp_fail, ts, zs, dense, integrals, n_rejected).
    When ``store`` is False the trajectory arrays hold only the endpoints.
    """
    n = 6
    cap = 256 if store else 2
    ts = np.empty(cap)
    zs = np.empty((cap, n))
    dense = np.empty((cap, n, 4))
    acc = np.zeros(lo.shape[0])
    k = np.empty((7, n))
    z = z_init.copy()
    znew = np.empty(n)
    ztmp = np.empty(n)
    err = np.empty(n)
    zt = np.empty(n)
    yt = np.empty(n)
    q = np.empty((n, 4))

    ts[0] = t0
    zs[0, :] = z
    count = 1
    t = t0
    nrej = 0
    status = OK
    t_fail = math.nan
    c_fail = -1

    rhs_transformed(z, p, k[0])
    for i in range(4):
        if not math.isfinite(k[0, i]) or not math.isfinite(z[i]):
            return NON_FINITE, t, i, ts[:1], zs[:1], dense[:0], acc, nrej
    h = h_init if h_init > 0.0 else initial_step(z, k[0], p, rtol, atol, max_step)
    facold = 1e-4
    last_rejected = False
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            status = MAX_STEPS
            t_fail = t
            break
        h = min(h, max_step)
        final = False
        if t + 1.01 * h >= t_end:
            h = t_end - t
            final = True
        if h < MIN_STEP:
            status = STEP_UNDERFLOW
            t_fail = t
            break
        for s in range(1, 6):
            for i in range(n):
                acc_i = 0.0
                for r in range(s):
                    if A[s, r] != 0.0:
                        acc_i += A[s, r] * k[r, i]
                ztmp[i] = z[i] + h * acc_i
            rhs_transformed(ztmp, p, k[s])
        for i in range(n):
            acc_i = 0.0
            for r in range(6):
                acc_i += B[r] * k[r, i]
            znew[i] = z[i] + h * acc_i
        rhs_transformed(znew, p, k[6])
        for i in range(n):
            e = 0.0
            for r in range(7):
                e += E[r] * k[r, i]
            err[i] = h * e
        finite = True
        for i in range(4):
            if not math.isfinite(znew[i]):
                finite = False
        en = error_norm(err, z, znew, rtol, atol) if finite else math.inf
        if not math.isfinite(en):
            en = math.inf
        steps += 1
        if en <= 1.0:
            for i in range(n):
                for c in range(4):
                    sacc = 0.0
                    for r in range(7):
                        sacc += k[r, i] * P[r, c]
                    q[i, c] = sacc
            if lo.shape[0] > 0:
                if not accumulate(t, h, z, q, p, lo, hi, comp, target, power, nsub, acc, zt, yt):
                    status = DEGENERATE
                    t_fail = t
                    break
            bad = -1
            for i in range(4):
                if znew[i] < 0.0:
                    if znew[i] < -VIOLATION_TOL:
                        bad = i
                    elif project:
                        znew[i] = 0.0
            if bad >= 0:
                status = INVARIANT
                t_fail = t + h
                c_fail = bad
                break
            if store:
                if count >= cap:
                    cap2 = cap * 2
                    ts2 = np.empty(cap2)
                    zs2 = np.empty((cap2, n))
                    d2 = np.empty((cap2, n, 4))
                    ts2[:count] = ts[:count]
                    zs2[:count] = zs[:count]
                    d2[:count - 1] = dense[:count - 1]
                    ts, zs, dense, cap = ts2, zs2, d2, cap2
                dense[count - 1] = q
                ts[count] = t_end if final else t + h
                zs[count] = znew
                count += 1
            t = t_end if final else t + h
            for i in range(n):
                z[i] = znew[i]
            rhs_transformed(z, p, k[0])
            fac11 = en ** 0.17 if en > 0.0 else 0.0
            fac = fac11 / facold ** 0.04 / 0.9
            fac = max(0.1, min(5.0, fac))
            hnew = h / fac
            if last_rejected:
                hnew = min(hnew, h)
            facold = max(en, 1e-4)
            last_rejected = False
            h = hnew
        else:
            nrej += 1
            fac11 = en ** 0.17 if math.isfinite(en) else 5.0
            h = h / min(5.0, fac11 / 0.9)
            last_rejected = True
    if not store:
        ts[1] = t
        zs[1] = z
        count = 2
        return status, t_fail, c_fail, ts[:count], zs[:count], dense[:0], acc, nrej
    return status, t_fail, c_fail, ts[:count], zs[:count], dense[:count - 1], acc, nrej
