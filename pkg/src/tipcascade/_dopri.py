"""Dormand-Prince 5(4) stepper specialised to the two-state cascade.

The right-hand side
    dx/dt = 3x - x^3 + Lambda(r t)
    dy/dt = (3y - y^3 + M(x)) / epsilon
is compiled into the stepping loop so regime sweeps stay fast even when
the downstream stiffness (|3 - 3 y^2| / epsilon) forces hundreds of
thousands of accepted steps.  Each accepted step stores the quartic
dense-output coefficients so events can later be localised on the
continuous solution.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# Butcher tableau of the Dormand-Prince 5(4) pair (FSAL, 7 stages).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = (3 / 40, 9 / 40)
_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
# Quartic interpolant weights: y(t0 + tau h) = y0 + h * K^T P [tau, tau^2, tau^3, tau^4].
_P = np.array(
    [
        [
            1.0,
            -8048581381 / 2820520608,
            8663915743 / 2820520608,
            -12715105075 / 11282082432,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200 / 32700410799,
            -68118460800 / 10900136933,
            87487479700 / 32700410799,
        ],
        [
            0.0,
            -1754552775 / 470086768,
            14199869525 / 1410260304,
            -10690763975 / 1880347072,
        ],
        [
            0.0,
            127303824393 / 49829197408,
            -318862633887 / 49829197408,
            701980252875 / 199316789632,
        ],
        [
            0.0,
            -282668133 / 205662961,
            2019193451 / 616988883,
            -1453857185 / 822651844,
        ],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

# Kernel exit codes.
STATUS_SETTLED = 0
STATUS_HORIZON = 1
STATUS_UNDERFLOW = 2
STATUS_OVERFLOW = 3

COUPLING_LINEAR = 0
COUPLING_LOCALISED = 1


@njit(cache=True, inline="always")
def _rhs(t, x, y, lam_minus, lam_plus, rate, eps, ckind, ca, cb, cc, cd, cxref):
    lam = lam_minus + (lam_plus - lam_minus) * 0.5 * (math.tanh(rate * t) + 1.0)
    if ckind == COUPLING_LINEAR:
        mu = ca + cb * (x - cxref)
    else:
        mu = ca + cb / math.cosh(cc * (x - cd))
    dx = 3.0 * x - x * x * x + lam
    dy = (3.0 * y - y * y * y + mu) / eps
    return dx, dy


@njit(cache=True)
def integrate_kernel(
    t0,
    x0,
    y0,
    t_max,
    rtol,
    atol,
    max_step,
    lam_minus,
    lam_plus,
    rate,
    eps,
    ckind,
    ca,
    cb,
    cc,
    cd,
    cxref,
    settle_gate_t,
    settle_tol,
    stable_eq,
    max_nodes,
):
    """Run the adaptive pair until settlement, horizon, or failure.

    ``stable_eq`` is an (m, 2) array of stable frozen equilibria at the
    forcing limit; once t >= settle_gate_t the integration stops at the
    first accepted node within settle_tol (sup norm) of any of them.

    Returns (status, ts, states, qcoef) with ts shape (n,), states shape
    (n, 2) and qcoef shape (n - 1, 2, 4).
    """
    cap = 4096
    ts = np.empty(cap)
    states = np.empty((cap, 2))
    qcoef = np.empty((cap, 2, 4))

    t = t0
    x = x0
    y = y0
    ts[0] = t
    states[0, 0] = x
    states[0, 1] = y
    n = 1

    kx = np.empty(7)
    ky = np.empty(7)
    fx, fy = _rhs(t, x, y, lam_minus, lam_plus, rate, eps, ckind, ca, cb, cc, cd, cxref)

    # Initial step size from the standard curvature probe.
    scale_x = atol + rtol * abs(x)
    scale_y = atol + rtol * abs(y)
    d0 = math.sqrt(0.5 * ((x / scale_x) ** 2 + (y / scale_y) ** 2))
    d1 = math.sqrt(0.5 * ((fx / scale_x) ** 2 + (fy / scale_y) ** 2))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    xp = x + h0 * fx
    yp = y + h0 * fy
    gx, gy = _rhs(
        t + h0, xp, yp, lam_minus, lam_plus, rate, eps, ckind, ca, cb, cc, cd, cxref
    )
    d2 = (
        math.sqrt(0.5 * (((gx - fx) / scale_x) ** 2 + ((gy - fy) / scale_y) ** 2)) / h0
    )
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100.0 * h0, h1, max_step, t_max - t0)

    status = STATUS_HORIZON
    rejected = False
    while True:
        if t >= t_max - 1e-12 * max(1.0, abs(t_max)):
            status = STATUS_HORIZON
            break
        if n >= max_nodes:
            status = STATUS_OVERFLOW
            break
        if h < 1e-14 * max(1.0, abs(t)):
            status = STATUS_UNDERFLOW
            break
        h = min(h, max_step)
        if t + h > t_max:
            h = t_max - t

        kx[0] = fx
        ky[0] = fy
        for s in range(1, 6):
            ax = 0.0
            ay = 0.0
            for j in range(s):
                ax += _A[s, j] * kx[j]
                ay += _A[s, j] * ky[j]
            sx, sy = _rhs(
                t + _C[s] * h,
                x + h * ax,
                y + h * ay,
                lam_minus,
                lam_plus,
                rate,
                eps,
                ckind,
                ca,
                cb,
                cc,
                cd,
                cxref,
            )
            kx[s] = sx
            ky[s] = sy
        bx = 0.0
        by = 0.0
        for j in range(6):
            bx += _B[j] * kx[j]
            by += _B[j] * ky[j]
        t_new = t + h
        x_new = x + h * bx
        y_new = y + h * by
        fx_new, fy_new = _rhs(
            t_new,
            x_new,
            y_new,
            lam_minus,
            lam_plus,
            rate,
            eps,
            ckind,
            ca,
            cb,
            cc,
            cd,
            cxref,
        )
        kx[6] = fx_new
        ky[6] = fy_new

        ex = 0.0
        ey = 0.0
        for j in range(7):
            ex += _E[j] * kx[j]
            ey += _E[j] * ky[j]
        scale_x = atol + rtol * max(abs(x), abs(x_new))
        scale_y = atol + rtol * max(abs(y), abs(y_new))
        err = math.sqrt(
            0.5 * ((h * ex / scale_x) ** 2 + (h * ey / scale_y) ** 2)
        )

        if err <= 1.0:
            if n + 1 > cap:
                cap *= 2
                ts2 = np.empty(cap)
                states2 = np.empty((cap, 2))
                qcoef2 = np.empty((cap, 2, 4))
                ts2[:n] = ts[:n]
                states2[:n] = states[:n]
                qcoef2[: n - 1] = qcoef[: n - 1]
                ts = ts2
                states = states2
                qcoef = qcoef2
            for col in range(4):
                qx = 0.0
                qy = 0.0
                for j in range(7):
                    qx += kx[j] * _P[j, col]
                    qy += ky[j] * _P[j, col]
                qcoef[n - 1, 0, col] = qx
                qcoef[n - 1, 1, col] = qy
            ts[n] = t_new
            states[n, 0] = x_new
            states[n, 1] = y_new
            n += 1

            t = t_new
            x = x_new
            y = y_new
            fx = fx_new
            fy = fy_new

            if t >= settle_gate_t:
                for m in range(stable_eq.shape[0]):
                    if (
                        abs(x - stable_eq[m, 0]) <= settle_tol
                        and abs(y - stable_eq[m, 1]) <= settle_tol
                    ):
                        status = STATUS_SETTLED
                        break
                if status == STATUS_SETTLED:
                    break

            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(_MAX_FACTOR, _SAFETY * err ** -0.2)
            if rejected:
                factor = min(1.0, factor)
            h *= factor
            rejected = False
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            rejected = True

    return status, ts[:n].copy(), states[:n].copy(), qcoef[: max(n - 1, 0)].copy()
