"""Compiled inner loops for the hybrid circuit integrator.

State vector layout: ``[v_piezo, w, x_1, xd_1, ..., x_m, xd_m]`` where ``w``
is the rectified voltage (Standard) or the output-capacitor voltage (SECE)
and ``x_i`` are the modal resonator states of a random excitation.

Circuit parameters travel in a flat float array ``P``:

    0 alpha, 1 c0, 2 g_leak, 3 c_store, 4 g_load, 5 bridge diode drop,
    6 constant-voltage flag, 7 v_load, 8 extraction kind (0 ideal, 1 flyback),
    9 efficiency, 10 l_ind, 11 r_series, 12 flyback diode drop,
    13 trigger_min_v, 14 resonator output scale

Closed-form motion is ``M = [amplitude, omega, phase]`` (one column per
sinusoid); resonators are ``R = [omega, q, gain]`` (one column per mode).
Random excitation noise arrives in chunks ``noise[mode, hold_index - jbase]``;
one hold interval spans ``ratio`` integration steps.

Division checks are off (``error_model="numpy"``); callers validate
parameters before entering.
"""

import math

import numpy as np
from numba import njit

DIODE_ON = 0
DIODE_OFF = 1
SECE_FIRE = 2

STATUS_OK = 0
STATUS_CHATTER = 1

# mode transitions allowed inside one base step before declaring a fault
MAX_TRANSITIONS_PER_STEP = 6

N_PARAMS = 15
OFF = 2

_jit = njit(cache=True, error_model="numpy")
_inline = njit(cache=True, error_model="numpy", inline="always")


@_jit
def detect_extremum(v_prev, v_curr, v_next, trigger_min_v):
    return v_prev < v_curr and v_curr >= v_next and v_curr >= trigger_min_v


@_inline
def motion(t, y, off, M, R, scale):
    u = 0.0
    ud = 0.0
    for i in range(M.shape[1]):
        a = M[1, i] * t + M[2, i]
        u += M[0, i] * math.sin(a)
        ud += M[0, i] * M[1, i] * math.cos(a)
    for i in range(R.shape[1]):
        u += scale * y[off + 2 * i]
        ud += scale * y[off + 2 * i + 1]
    return u, ud


@_inline
def mode_derivs(y, off, R, wn, dy):
    for i in range(R.shape[1]):
        j = off + 2 * i
        w = R[0, i]
        dy[j] = y[j + 1]
        dy[j + 1] = -w * w * y[j] - (w / R[1, i]) * y[j + 1] + R[2, i] * w * w * wn[i]


@_inline
def _mode_rk4(y, h, R, wn, k, tmp, out):
    n = y.shape[0]
    mode_derivs(y, 0, R, wn, k[0])
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k[0, i]
    mode_derivs(tmp, 0, R, wn, k[1])
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k[1, i]
    mode_derivs(tmp, 0, R, wn, k[2])
    for i in range(n):
        tmp[i] = y[i] + h * k[2, i]
    mode_derivs(tmp, 0, R, wn, k[3])
    for i in range(n):
        out[i] = y[i] + h / 6.0 * (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i])


@_jit
def mode_rk4(y, h, R, wn, k, tmp, out):
    """One RK4 step of the bare resonator bank (no circuit states)."""
    _mode_rk4(y, h, R, wn, k, tmp, out)


@_jit
def sample_modes(y, k0, k1, h, noise, jbase, R, scale, decim, out):
    """Advance the resonator bank over hold steps ``k0..k1`` in place.

    The displacement and velocity at every grid index divisible by ``decim``
    (including ``k1``) are written to ``out[index // decim]``; ``decim <= 0``
    disables recording.
    """
    n = y.shape[0]
    nr = R.shape[1]
    k = np.empty((4, n))
    tmp = np.empty(n)
    nxt = np.empty(n)
    wn = np.empty(nr)
    if decim > 0 and k0 % decim == 0:
        u = 0.0
        ud = 0.0
        for i in range(nr):
            u += scale * y[2 * i]
            ud += scale * y[2 * i + 1]
        out[k0 // decim, 0] = u
        out[k0 // decim, 1] = ud
    for m in range(k0, k1):
        for i in range(nr):
            wn[i] = noise[i, m - jbase]
        _mode_rk4(y, h, R, wn, k, tmp, nxt)
        for i in range(n):
            y[i] = nxt[i]
        if decim > 0 and (m + 1) % decim == 0:
            u = 0.0
            ud = 0.0
            for i in range(nr):
                u += scale * y[2 * i]
                ud += scale * y[2 * i + 1]
            out[(m + 1) // decim, 0] = u
            out[(m + 1) // decim, 1] = ud


@_inline
def deriv(t, y, mode, P, M, R, wn, dy):
    u, ud = motion(t, y, OFF, M, R, P[14])
    alpha = P[0]
    c0 = P[1]
    gl = P[2]
    cst = P[3]
    gload = P[4]
    cv = P[6] != 0.0
    if mode == 0:
        dy[0] = (alpha * ud - y[0] * gl) / c0
        dy[1] = 0.0 if cv else -y[1] * gload / cst
    elif cv:
        dy[0] = 0.0
        dy[1] = 0.0
    else:
        dw = (mode * alpha * ud - abs(y[0]) * gl - y[1] * gload) / (c0 + cst)
        dy[1] = dw
        dy[0] = mode * dw
    mode_derivs(y, OFF, R, wn, dy)


@_inline
def rk4_hot(t, y, h, mode, P, M, R, wn, k, tmp, out):
    n = y.shape[0]
    deriv(t, y, mode, P, M, R, wn, k[0])
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k[0, i]
    deriv(t + 0.5 * h, tmp, mode, P, M, R, wn, k[1])
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k[1, i]
    deriv(t + 0.5 * h, tmp, mode, P, M, R, wn, k[2])
    for i in range(n):
        tmp[i] = y[i] + h * k[2, i]
    deriv(t + h, tmp, mode, P, M, R, wn, k[3])
    for i in range(n):
        out[i] = y[i] + h / 6.0 * (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i])
    if mode != 0:
        # conducting: the piezo voltage is clamped to the rectified one
        out[0] = mode * (out[1] + 2.0 * P[5])


# Out-of-line copy for the bisection and sub-step sites; only the once-per-step
# call sites inline the integrator, which keeps compile time reasonable.
@_jit
def rk4(t, y, h, mode, P, M, R, wn, k, tmp, out):
    rk4_hot(t, y, h, mode, P, M, R, wn, k, tmp, out)


@_inline
def bridge_current(t, y, mode, P, M, R):
    u, ud = motion(t, y, OFF, M, R, P[14])
    alpha = P[0]
    gl = P[2]
    if P[6] != 0.0:
        return mode * alpha * ud - abs(y[0]) * gl
    cst = P[3]
    gload = P[4]
    dw = (mode * alpha * ud - abs(y[0]) * gl - y[1] * gload) / (P[1] + cst)
    return cst * dw + y[1] * gload


@_jit
def push_event(ev, nev, t, kind, v, e):
    if nev >= ev.shape[0]:
        bigger = np.empty((2 * ev.shape[0] + 16, 4))
        bigger[:nev] = ev[:nev]
        ev = bigger
    ev[nev, 0] = t
    ev[nev, 1] = kind
    ev[nev, 2] = v
    ev[nev, 3] = e
    return ev, nev + 1


@_inline
def fill_noise(wn, noise, step, jbase, ratio):
    j = step // ratio - jbase
    if j < 0:
        j = 0
    for i in range(wn.shape[0]):
        wn[i] = noise[i, j]


@_jit
def store(m, N, dt, y, p_load, p_in, P, M, R, k_settle, decim, rec, sums):
    if m % decim == 0:
        t = m * dt
        u, ud = motion(t, y, OFF, M, R, P[14])
        row = m // decim
        rec[row, 0] = t
        rec[row, 1] = u
        rec[row, 2] = ud
        rec[row, 3] = y[0]
        rec[row, 4] = y[1]
        rec[row, 5] = p_load
        rec[row, 6] = p_in
    if m >= k_settle and m < N:
        sums[0] += p_load
        sums[1] += p_in
        sums[2] += 1.0


@_jit
def std_store(m, N, dt, y, mode, P, M, R, k_settle, decim, rec, sums):
    ib = 0.0
    if mode != 0:
        ib = bridge_current(m * dt, y, mode, P, M, R)
        if ib < 0.0:
            ib = 0.0
    p_in = abs(y[0]) * ib
    if P[6] != 0.0:
        p_load = P[7] * ib
    else:
        p_load = y[1] * y[1] * P[4]
    store(m, N, dt, y, p_load, p_in, P, M, R, k_settle, decim, rec, sums)


@_jit
def _bisect_switch(t, y, h, s, mode, P, M, R, wn, k, tmp, ytry, tol):
    """Earliest sub-step after which the pending bridge transition holds.

    A blocked bridge (``mode == 0``) turns on once ``s*v > w + 2 vd``; a
    conducting one turns off on negative bridge current.  Returns the
    sub-step and leaves the state at its end in ``ytry``.
    """
    n = y.shape[0]
    vd = P[5]
    lo = 0.0
    hi = h
    if mode == 0:
        if s * y[0] - (y[1] + 2.0 * vd) > 0.0:
            hi = 0.0
    elif bridge_current(t, y, mode, P, M, R) < 0.0:
        hi = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        rk4(t, y, mid, mode, P, M, R, wn, k, tmp, ytry)
        if mode == 0:
            hit = s * ytry[0] - (ytry[1] + 2.0 * vd) > 0.0
        else:
            hit = bridge_current(t + mid, ytry, mode, P, M, R) < 0.0
        if hit:
            hi = mid
        else:
            lo = mid
    if hi > 0.0:
        rk4(t, y, hi, mode, P, M, R, wn, k, tmp, ytry)
    else:
        for i in range(n):
            ytry[i] = y[i]
    return hi


@_jit
def run_standard(k0, k1, N, dt, tol, y, st, P, M, R, noise, jbase, ratio,
                 k_settle, decim, rec, sums, ev, nev):
    """Integrate the diode-bridge circuit over base steps ``k0..k1``.

    ``st[0]`` holds the bridge state (0 blocked, +1/-1 conducting polarity)
    and is updated in place together with ``y``.  On a chatter fault the
    offending step index is left in ``st[1]``.
    """
    n = y.shape[0]
    k = np.empty((4, n))
    tmp = np.empty(n)
    ynew = np.empty(n)
    ytry = np.empty(n)
    wn = np.zeros(R.shape[1])
    vd = P[5]
    c0 = P[1]
    cst = P[3]
    cv = P[6] != 0.0
    mode = st[0]
    if k0 == 0:
        std_store(0, N, dt, y, mode, P, M, R, k_settle, decim, rec, sums)
    for kk in range(k0, k1):
        fill_noise(wn, noise, kk, jbase, ratio)
        t = kk * dt
        t_end = (kk + 1) * dt
        ntrans = 0
        while True:
            h = t_end - t
            rk4_hot(t, y, h, mode, P, M, R, wn, k, tmp, ynew)
            if mode == 0:
                thr = ynew[1] + 2.0 * vd
                s = 0
                if ynew[0] - thr > 0.0:
                    s = 1
                elif -ynew[0] - thr > 0.0:
                    s = -1
                if s == 0:
                    for i in range(n):
                        y[i] = ynew[i]
                    break
                hi = _bisect_switch(t, y, h, s, mode, P, M, R, wn, k, tmp, ytry, tol)
                ev, nev = push_event(ev, nev, t + hi, DIODE_ON, ytry[0], 0.0)
                if not cv:
                    # charge-conserving hand-over of the overshoot to C_R
                    ytry[1] = (c0 * (s * ytry[0] - 2.0 * vd) + cst * ytry[1]) / (c0 + cst)
                ytry[0] = s * (ytry[1] + 2.0 * vd)
                mode = s
            else:
                if bridge_current(t_end, ynew, mode, P, M, R) >= 0.0:
                    for i in range(n):
                        y[i] = ynew[i]
                    break
                hi = _bisect_switch(t, y, h, mode, mode, P, M, R, wn, k, tmp, ytry, tol)
                ev, nev = push_event(ev, nev, t + hi, DIODE_OFF, ytry[0], 0.0)
                mode = 0
            for i in range(n):
                y[i] = ytry[i]
            ntrans += 1
            if ntrans > MAX_TRANSITIONS_PER_STEP:
                st[0] = mode
                st[1] = kk
                return ev, nev, STATUS_CHATTER
            if hi >= h:
                break
            t = t + hi
        std_store(kk + 1, N, dt, y, mode, P, M, R, k_settle, decim, rec, sums)
    st[0] = mode
    return ev, nev, STATUS_OK


@_jit
def flyback_transfer(v0, w, P):
    """Two-phase inductive transfer of the piezo charge to the output stage.

    Phase 1 rings ``c0`` into the inductor through the bridge until the piezo
    voltage reaches zero (or the inductor current dies first, leaving residual
    charge).  Phase 2 freewheels the inductor current into the output through
    a diode.  Both phases are short against the vibration period and are
    applied instantaneously on the simulation time line.

    Returns ``(v_after, e_extracted, e_to_load, w_after)``; ``e_to_load`` is
    the energy absorbed by a constant-voltage output (0 for a capacitor).
    """
    c0 = P[1]
    cout = P[3]
    cv = P[6] != 0.0
    vload = P[7]
    L = P[10]
    r = P[11]
    vd = P[12]
    sgn = 1.0 if v0 >= 0.0 else -1.0
    V = abs(v0)
    if V <= 2.0 * vd:
        return v0, 0.0, 0.0, w

    # phase 1: c0 dV/dt = -i, L di/dt = V - 2 vd - r i
    h = 0.5 * math.pi * math.sqrt(L * c0) / 400.0
    i_l = 0.0
    for _ in range(400 * 50):
        dv1 = -i_l / c0
        di1 = (V - 2.0 * vd - r * i_l) / L
        v2 = V + 0.5 * h * dv1
        i2 = i_l + 0.5 * h * di1
        dv2 = -i2 / c0
        di2 = (v2 - 2.0 * vd - r * i2) / L
        v3 = V + 0.5 * h * dv2
        i3 = i_l + 0.5 * h * di2
        dv3 = -i3 / c0
        di3 = (v3 - 2.0 * vd - r * i3) / L
        v4 = V + h * dv3
        i4 = i_l + h * di3
        dv4 = -i4 / c0
        di4 = (v4 - 2.0 * vd - r * i4) / L
        Vn = V + h / 6.0 * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
        In = i_l + h / 6.0 * (di1 + 2.0 * di2 + 2.0 * di3 + di4)
        if Vn <= 0.0:
            i_l = i_l + V / (V - Vn) * (In - i_l)
            V = 0.0
            break
        if In <= 0.0:
            V = V + i_l / (i_l - In) * (Vn - V)
            i_l = 0.0
            break
        V = Vn
        i_l = In
    e_extracted = 0.5 * c0 * (v0 * v0 - V * V)
    if i_l <= 0.0:
        return sgn * V, e_extracted, 0.0, w

    # phase 2: L di/dt = -(v_out + vd) - r i into the output stage
    if cv:
        drive = vload + vd
        h2 = L * i_l / drive / 400.0
        e_load = 0.0
        for _ in range(400 * 50):
            di1 = (-drive - r * i_l) / L
            di2 = (-drive - r * (i_l + 0.5 * h2 * di1)) / L
            di3 = (-drive - r * (i_l + 0.5 * h2 * di2)) / L
            di4 = (-drive - r * (i_l + h2 * di3)) / L
            In = i_l + h2 / 6.0 * (di1 + 2.0 * di2 + 2.0 * di3 + di4)
            if In <= 0.0:
                e_load += vload * 0.5 * i_l * (i_l / (i_l - In)) * h2
                i_l = 0.0
                break
            e_load += vload * 0.5 * (i_l + In) * h2
            i_l = In
        return sgn * V, e_extracted, e_load, w

    vo = w
    h2 = 0.5 * math.pi * math.sqrt(L * cout) / 400.0
    for _ in range(400 * 50):
        di1 = (-(vo + vd) - r * i_l) / L
        dv1 = i_l / cout
        i2 = i_l + 0.5 * h2 * di1
        v2 = vo + 0.5 * h2 * dv1
        di2 = (-(v2 + vd) - r * i2) / L
        dv2 = i2 / cout
        i3 = i_l + 0.5 * h2 * di2
        v3 = vo + 0.5 * h2 * dv2
        di3 = (-(v3 + vd) - r * i3) / L
        dv3 = i3 / cout
        i4 = i_l + h2 * di3
        v4 = vo + h2 * dv3
        di4 = (-(v4 + vd) - r * i4) / L
        dv4 = i4 / cout
        In = i_l + h2 / 6.0 * (di1 + 2.0 * di2 + 2.0 * di3 + di4)
        Vn = vo + h2 / 6.0 * (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4)
        if In <= 0.0:
            vo = vo + i_l / (i_l - In) * (Vn - vo)
            i_l = 0.0
            break
        vo = Vn
        i_l = In
    return sgn * V, e_extracted, 0.0, vo


@_jit
def extract(v, w, P):
    if P[8] == 0.0:
        e = 0.5 * P[1] * v * v
        dep = P[9] * e
        if P[6] != 0.0:
            return 0.0, e, dep, w
        return 0.0, e, 0.0, math.sqrt(w * w + 2.0 * dep / P[3])
    return flyback_transfer(v, w, P)


@_inline
def abs_slope(t, y, P, M, R):
    """Time derivative of |v_piezo| between extraction events."""
    u, ud = motion(t, y, OFF, M, R, P[14])
    d = (P[0] * ud - y[0] * P[2]) / P[1]
    if y[0] > 0.0:
        return d
    if y[0] < 0.0:
        return -d
    return abs(d)


@_jit
def span(ts, ys, te, dt, P, M, R, noise, jbase, ratio, wn, k, tmp, work, out):
    """Integrate the open-circuit piezo from ``ts`` to ``te``.

    The span is split at base-grid boundaries so each piece sees the noise
    sample of its own step.
    """
    n = ys.shape[0]
    for i in range(n):
        out[i] = ys[i]
    t = ts
    while te - t > 0.0:
        m = int(math.floor(t / dt))
        if (m + 1) * dt <= t:
            m += 1
        if m < 0:
            m = 0
        tb = (m + 1) * dt
        if tb > te:
            tb = te
        fill_noise(wn, noise, m, jbase, ratio)
        rk4(t, out, tb - t, 0, P, M, R, wn, k, tmp, work)
        for i in range(n):
            out[i] = work[i]
        t = tb


@_jit
def sece_store(m, N, dt, y, e_in, e_out, P, M, R, k_settle, decim, rec, sums):
    p_in = e_in / dt
    if P[6] != 0.0:
        p_load = e_out / dt
    else:
        p_load = y[1] * y[1] * P[4]
    store(m, N, dt, y, p_load, p_in, P, M, R, k_settle, decim, rec, sums)


@_jit
def _locate_peak(tb, tc, y, yc, ya, hist, dt, tol, P, M, R, noise, jbase, ratio,
                 wn, k, tmp, work, yt, ye):
    """Place a detected |v| maximum and leave the state there in ``ye``.

    The peak lies either in the current step (slope still positive at its
    start) or in the previous interval; the sign change of d|v|/dt is
    bisected by re-integrating from the interval start.  Without a clean
    bracket the sampled maximum itself is used.
    """
    t0 = tb
    use_a = False
    lo = tb
    hi = tb
    if abs_slope(tb, y, P, M, R) > 0.0:
        if abs_slope(tc, yc, P, M, R) <= 0.0:
            hi = tc
    elif abs_slope(hist[0], ya, P, M, R) > 0.0:
        use_a = True
        t0 = hist[0]
        lo = hist[0]
    ys = ya if use_a else y
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        span(t0, ys, mid, dt, P, M, R, noise, jbase, ratio, wn, k, tmp, work, yt)
        if abs_slope(mid, yt, P, M, R) <= 0.0:
            hi = mid
        else:
            lo = mid
    span(t0, ys, hi, dt, P, M, R, noise, jbase, ratio, wn, k, tmp, work, ye)
    return hi


@_jit
def run_sece(k0, k1, N, dt, tol, y, ya, hist, P, M, R, noise, jbase, ratio,
             k_settle, decim, rec, sums, ev, nev):
    """Integrate the SECE circuit over base steps ``k0..k1``.

    ``y`` is the state at grid time ``k0 * dt`` (pending commit).  The
    previous |v| sample lives in ``ya`` with ``hist = [t_a, |v_a|, e_in,
    e_out, has_a]``; ``e_in``/``e_out`` are the energies already booked on
    the pending grid sample.  A fire is decided by the three-sample rule on
    (a, current, next) and then localized on the sign change of d|v|/dt.
    """
    n = y.shape[0]
    k = np.empty((4, n))
    tmp = np.empty(n)
    work = np.empty(n)
    yc = np.empty(n)
    ye = np.empty(n)
    yt = np.empty(n)
    wn = np.zeros(R.shape[1])
    trig = P[13]
    for kk in range(k0, k1):
        tb = kk * dt
        tc = (kk + 1) * dt
        fill_noise(wn, noise, kk, jbase, ratio)
        rk4_hot(tb, y, dt, 0, P, M, R, wn, k, tmp, yc)
        ab = abs(y[0])
        ac = abs(yc[0])
        ec_in = 0.0
        ec_out = 0.0
        if hist[4] != 0.0 and detect_extremum(hist[1], ab, ac, trig):
            te = _locate_peak(tb, tc, y, yc, ya, hist, dt, tol, P, M, R, noise, jbase,
                              ratio, wn, k, tmp, work, yt, ye)
            v_before = ye[0]
            v_after, e_ext, e_load, w_after = extract(v_before, ye[1], P)
            ye[0] = v_after
            ye[1] = w_after
            ev, nev = push_event(ev, nev, te, SECE_FIRE, v_before, e_ext)
            if te <= tb:
                span(te, ye, tb, dt, P, M, R, noise, jbase, ratio, wn, k, tmp, work, yt)
                for i in range(n):
                    y[i] = yt[i]
                hist[2] += e_ext
                hist[3] += e_load
                span(tb, y, tc, dt, P, M, R, noise, jbase, ratio, wn, k, tmp, work, yc)
            else:
                span(te, ye, tc, dt, P, M, R, noise, jbase, ratio, wn, k, tmp, work, yc)
                ec_in = e_ext
                ec_out = e_load
            sece_store(kk, N, dt, y, hist[2], hist[3], P, M, R, k_settle, decim, rec, sums)
            for i in range(n):
                ya[i] = ye[i]
            hist[0] = te
            hist[1] = abs(ye[0])
        else:
            sece_store(kk, N, dt, y, hist[2], hist[3], P, M, R, k_settle, decim, rec, sums)
            for i in range(n):
                ya[i] = y[i]
            hist[0] = tb
            hist[1] = ab
        hist[4] = 1.0
        for i in range(n):
            y[i] = yc[i]
        hist[2] = ec_in
        hist[3] = ec_out
    if k1 == N:
        sece_store(N, N, dt, y, hist[2], hist[3], P, M, R, k_settle, decim, rec, sums)
    return ev, nev
