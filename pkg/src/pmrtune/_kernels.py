"""Compiled fixed-step integration kernels.

All three kernels integrate linear state equations with classic 4th-order
Runge-Kutta at a fixed step.  Dead time is realized by indexing into the
(already computed) input history, so the delay must be an integer number of
steps.  The kernels never raise: divergence is detected by the caller from
non-finite output samples.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def rk4_lti(A, B, C, D, u, h, delay_steps):
    """Simulate x' = A x + B u(t - tau), y = C x + D u(t - tau).

    ``u`` is sampled on the step grid; stage values use linear interpolation
    between samples.  Returns y sampled on the same grid.
    """
    n = A.shape[0]
    nsamp = u.shape[0]
    x = np.zeros(n)
    y = np.zeros(nsamp)

    def uin(i):
        j = i - delay_steps
        return u[j] if j >= 0 else 0.0

    for i in range(nsamp):
        ui = uin(i)
        y[i] = np.dot(C, x) + D * ui
        if i == nsamp - 1:
            break
        up = uin(i + 1)
        um = 0.5 * (ui + up)
        k1 = A @ x + B * ui
        k2 = A @ (x + 0.5 * h * k1) + B * um
        k3 = A @ (x + 0.5 * h * k2) + B * um
        k4 = A @ (x + h * k3) + B * up
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            y[i + 1] = np.nan
            break
    return y


@numba.njit(cache=True)
def rk4_relay_loop(A, B, C, d, h, nsteps, delay_steps):
    """Relay feedback around a strictly proper chain: u = d*sign(-y).

    The relay output is held constant over each step (it is genuinely
    piecewise constant) and sign(0) holds the previous relay state.
    Returns the chain output sampled on the grid (nsteps + 1 samples).
    """
    n = A.shape[0]
    x = np.zeros(n)
    y = np.zeros(nsteps + 1)
    ubuf = np.zeros(nsteps + 1)
    usign = 1.0
    for i in range(nsteps):
        e = -y[i]
        if e > 0.0:
            usign = 1.0
        elif e < 0.0:
            usign = -1.0
        ubuf[i] = d * usign
        j = i - delay_steps
        uin = ubuf[j] if j >= 0 else 0.0
        k1 = A @ x + B * uin
        k2 = A @ (x + 0.5 * h * k1) + B * uin
        k3 = A @ (x + 0.5 * h * k2) + B * uin
        k4 = A @ (x + h * k3) + B * uin
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        y[i + 1] = np.dot(C, x)
        if not np.isfinite(y[i + 1]):
            return y[: i + 2]
    return y


@numba.njit(cache=True)
def rk4_closed_loop(Ag, Bg, Cg, Ac, Bc, Cc, Dc, wts, amps, h, nsteps,
                    delay_steps):
    """Unity-feedback tracking loop: e = r - y, u = C(e), y = G(u(t-tau)).

    The reference r(t) = sum_q amps[q]*sin(wts[q]*t) is evaluated exactly at
    the RK4 stage times.  The plant is strictly proper (no feedthrough), the
    controller may be biproper.  For delayed plants the controller output is
    buffered on the grid and linearly interpolated at half steps; the delay
    makes the feedback path causal.  Returns (y, u, r) on the grid.
    """
    ng = Ag.shape[0]
    nc = Ac.shape[0]
    nh = wts.shape[0]
    xg = np.zeros(ng)
    xc = np.zeros(nc)
    y = np.zeros(nsteps + 1)
    u = np.zeros(nsteps + 1)
    r = np.zeros(nsteps + 1)
    ubuf = np.zeros(nsteps + 1)
    for i in range(nsteps + 1):
        t = i * h
        rv = 0.0
        for q in range(nh):
            rv += amps[q] * np.sin(wts[q] * t)
        r[i] = rv

    for i in range(nsteps):
        t = i * h
        rh = 0.0
        rf = 0.0
        for q in range(nh):
            rh += amps[q] * np.sin(wts[q] * (t + 0.5 * h))
            rf += amps[q] * np.sin(wts[q] * (t + h))

        if delay_steps > 0:
            e0 = r[i] - y[i]
            u0 = np.dot(Cc, xc) + Dc * e0
            u[i] = u0
            ubuf[i] = u0
            j = i - delay_steps
            u_t = ubuf[j] if j >= 0 else 0.0
            jp = j + 1
            if jp > i:
                u_tp = ubuf[i]
            elif jp >= 0:
                u_tp = ubuf[jp]
            else:
                u_tp = 0.0
            u_half = 0.5 * (u_t + u_tp)

            e1 = r[i] - np.dot(Cg, xg)
            dg1 = Ag @ xg + Bg * u_t
            dc1 = Ac @ xc + Bc * e1
            xg2 = xg + 0.5 * h * dg1
            xc2 = xc + 0.5 * h * dc1
            e2 = rh - np.dot(Cg, xg2)
            dg2 = Ag @ xg2 + Bg * u_half
            dc2 = Ac @ xc2 + Bc * e2
            xg3 = xg + 0.5 * h * dg2
            xc3 = xc + 0.5 * h * dc2
            e3 = rh - np.dot(Cg, xg3)
            dg3 = Ag @ xg3 + Bg * u_half
            dc3 = Ac @ xc3 + Bc * e3
            xg4 = xg + h * dg3
            xc4 = xc + h * dc3
            e4 = rf - np.dot(Cg, xg4)
            dg4 = Ag @ xg4 + Bg * u_tp
            dc4 = Ac @ xc4 + Bc * e4
        else:
            e1 = r[i] - np.dot(Cg, xg)
            u1 = np.dot(Cc, xc) + Dc * e1
            u[i] = u1
            dg1 = Ag @ xg + Bg * u1
            dc1 = Ac @ xc + Bc * e1
            xg2 = xg + 0.5 * h * dg1
            xc2 = xc + 0.5 * h * dc1
            e2 = rh - np.dot(Cg, xg2)
            u2 = np.dot(Cc, xc2) + Dc * e2
            dg2 = Ag @ xg2 + Bg * u2
            dc2 = Ac @ xc2 + Bc * e2
            xg3 = xg + 0.5 * h * dg2
            xc3 = xc + 0.5 * h * dc2
            e3 = rh - np.dot(Cg, xg3)
            u3 = np.dot(Cc, xc3) + Dc * e3
            dg3 = Ag @ xg3 + Bg * u3
            dc3 = Ac @ xc3 + Bc * e3
            xg4 = xg + h * dg3
            xc4 = xc + h * dc3
            e4 = rf - np.dot(Cg, xg4)
            u4 = np.dot(Cc, xc4) + Dc * e4
            dg4 = Ag @ xg4 + Bg * u4
            dc4 = Ac @ xc4 + Bc * e4

        xg = xg + (h / 6.0) * (dg1 + 2.0 * dg2 + 2.0 * dg3 + dg4)
        xc = xc + (h / 6.0) * (dc1 + 2.0 * dc2 + 2.0 * dc3 + dc4)
        y[i + 1] = np.dot(Cg, xg)
        if not np.isfinite(y[i + 1]):
            return y[: i + 2], u[: i + 2], r[: i + 2]

    eN = r[nsteps] - y[nsteps]
    u[nsteps] = np.dot(Cc, xc) + Dc * eN
    return y, u, r
