"""Compiled closed-loop right-hand side and fixed-step RK4 loop.

The arithmetic mirrors the numpy reference in :mod:`lagsync.simulation`
(``reference_rhs``), which the test-suite compares against.
"""
import numpy as np
from numba import njit

OK = 0
NONFINITE = 1
DIVERGED = 2


@njit(cache=True, nogil=True)
def spow(x, p):
    if x > 0.0:
        return x**p
    if x < 0.0:
        return -((-x) ** p)
    return 0.0


@njit(cache=True, nogil=True)
def rhs(x, out, n, N, A, S, E, ESS, obs, ctl, theta, grav, plants):
    """Closed-loop vector field.

    ``obs`` = (c1, c2, c3, a, b); ``ctl`` = (gamma1, gamma2, k1, k2, inv_alpha,
    alpha, beta, k1_pow, k2_pow, zeta_pow, kappa, eps_rc, Mhat, km_inv, kc,
    kg, smooth_radius). Layout of ``x``: leader (n), estimates (N*n),
    positions (N*2), velocities (N*2).
    """
    c1, c2, c3, a, b = obs[0], obs[1], obs[2], obs[3], obs[4]
    off_eta = n
    off_q = n + N * n
    off_v = off_q + 2 * N
    for k in range(n):
        acc = 0.0
        for j in range(n):
            acc += S[k, j] * x[j]
        out[k] = acc
    y = np.empty(n)
    deta = np.empty(n)
    for i in range(N):
        base = off_eta + i * n
        for k in range(n):
            yk = 0.0
            for j in range(N + 1):
                w = A[i + 1, j]
                if w != 0.0:
                    other = x[k] if j == 0 else x[off_eta + (j - 1) * n + k]
                    yk += w * (x[base + k] - other)
            y[k] = yk
        for k in range(n):
            s_eta = 0.0
            for j in range(n):
                s_eta += S[k, j] * x[base + j]
            d = s_eta - c1 * y[k] - c2 * spow(y[k], a)
            if c3 != 0.0:
                d = d - c3 * spow(y[k], b)
            deta[k] = d
            out[base + k] = d
        qi0 = off_q + 2 * i
        vi0 = off_v + 2 * i
        if not plants:
            out[qi0] = 0.0
            out[qi0 + 1] = 0.0
            out[vi0] = 0.0
            out[vi0 + 1] = 0.0
            continue
        g1, g2, k1, k2 = ctl[0], ctl[1], ctl[2], ctl[3]
        inv_a, al, be = ctl[4], ctl[5], ctl[6]
        k1_pow, k2_pow, z_pow = ctl[7], ctl[8], ctl[9]
        kappa, eps_rc, Mhat = ctl[10], ctl[11], ctl[12]
        kmi, kc, kg, rad = ctl[13], ctl[14], ctl[15], ctl[16]
        u2 = np.empty(2)
        zeta = np.empty(2)
        for r in range(2):
            eq = 0.0
            ev = 0.0
            ess = 0.0
            for j in range(n):
                eq += E[r, j] * x[base + j]
                ev += E[r, j] * deta[j]
                ess += ESS[r, j] * x[base + j]
            qb = x[qi0 + r] - eq
            vb = x[vi0 + r] - ev
            inner = g1 * spow(qb, al) + g2 * spow(qb, be)
            eps = spow(vb, inv_a) + spow(inner, inv_a)
            u2[r] = -k1 * spow(eps, k1_pow) - k2 * spow(eps, k2_pow) + ess
            zeta[r] = spow(eps, z_pow)
        nz = np.sqrt(zeta[0] * zeta[0] + zeta[1] * zeta[1])
        v0 = x[vi0]
        v1 = x[vi0 + 1]
        f = kmi * (kc * (v0 * v0 + v1 * v1) + kg)
        gain = kappa / (1.0 - eps_rc) * (eps_rc * np.sqrt(u2[0] * u2[0] + u2[1] * u2[1]) + f)
        tau0 = 0.0
        tau1 = 0.0
        if nz > 0.0:
            den = nz
            if rad > 0.0 and rad > nz:
                den = rad
            tau0 = Mhat * (-gain * zeta[0] / den + u2[0])
            tau1 = Mhat * (-gain * zeta[1] / den + u2[1])
        else:
            tau0 = Mhat * u2[0]
            tau1 = Mhat * u2[1]
        t1, t2, t3, t4, t5, t6 = theta[i, 0], theta[i, 1], theta[i, 2], theta[i, 3], theta[i, 4], theta[i, 5]
        q0 = x[qi0]
        q1 = x[qi0 + 1]
        c2q = np.cos(q1)
        s2q = t3 * np.sin(q1)
        m11 = t1 + t2 + 2.0 * t3 * c2q
        m12 = t2 + t3 * c2q
        c12 = np.cos(q0 + q1)
        r0 = tau0 - (-s2q * v0 * v0 - 2.0 * s2q * v0 * v1) - (t5 * grav * np.cos(q0) + t6 * grav * c12)
        r1 = tau1 - s2q * v1 * v1 - t6 * grav * c12
        det = m11 * t4 - m12 * m12
        out[qi0] = v0
        out[qi0 + 1] = v1
        out[vi0] = (t4 * r0 - m12 * r1) / det
        out[vi0 + 1] = (m11 * r1 - m12 * r0) / det


@njit(cache=True, nogil=True)
def lyapunov(x, n, N, A, obs, d):
    c1, c2, c3, a, b = obs[0], obs[1], obs[2], obs[3], obs[4]
    off_eta = n
    total = 0.0
    for i in range(N):
        base = off_eta + i * n
        acc = 0.0
        sq = 0.0
        for k in range(n):
            yk = 0.0
            for j in range(N + 1):
                w = A[i + 1, j]
                if w != 0.0:
                    other = x[k] if j == 0 else x[off_eta + (j - 1) * n + k]
                    yk += w * (x[base + k] - other)
            ay = abs(yk)
            acc += c2 / (1.0 + a) * ay ** (1.0 + a)
            if c3 != 0.0:
                acc += c3 / (1.0 + b) * ay ** (1.0 + b)
            sq += yk * yk
        total += d[i] * acc + 0.5 * c1 * d[i] * sq
    return total


@njit(cache=True, nogil=True)
def errors(x, n, N, E, ES, obs_err, pos_err, vel_err):
    """Per-agent infinity-norm errors of estimate, position and velocity."""
    off_eta = n
    off_q = n + N * n
    off_v = off_q + 2 * N
    for i in range(N):
        m = 0.0
        for k in range(n):
            e = abs(x[off_eta + i * n + k] - x[k])
            if e > m:
                m = e
        obs_err[i] = m
        mp = 0.0
        mv = 0.0
        for r in range(2):
            q0 = 0.0
            v0 = 0.0
            for j in range(n):
                q0 += E[r, j] * x[j]
                v0 += ES[r, j] * x[j]
            ep = abs(x[off_q + 2 * i + r] - q0)
            ev = abs(x[off_v + 2 * i + r] - v0)
            if ep > mp:
                mp = ep
            if ev > mv:
                mv = ev
        pos_err[i] = mp
        vel_err[i] = mv


@njit(cache=True, nogil=True)
def integrate(x0, h, n_steps, record_every, tol, n, N, A, S, E, ES, ESS, obs, ctl,
              theta, grav, plants, d, blowup):
    """RK4 from ``x0``; returns recorded states, V, last-exceedance indices and status."""
    dim = x0.shape[0]
    n_rec = n_steps // record_every + 1
    states = np.empty((n_rec, dim))
    V = np.empty(n_rec)
    last = np.full((3, N), -1, dtype=np.int64)
    obs_err = np.empty(N)
    pos_err = np.empty(N)
    vel_err = np.empty(N)
    x = x0.copy()
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    states[0] = x
    V[0] = lyapunov(x, n, N, A, obs, d)
    errors(x, n, N, E, ES, obs_err, pos_err, vel_err)
    for i in range(N):
        if obs_err[i] >= tol:
            last[0, i] = 0
        if pos_err[i] >= tol:
            last[1, i] = 0
        if vel_err[i] >= tol:
            last[2, i] = 0
    status = OK
    done = 0
    for step in range(n_steps):
        rhs(x, k1, n, N, A, S, E, ESS, obs, ctl, theta, grav, plants)
        for j in range(dim):
            tmp[j] = x[j] + 0.5 * h * k1[j]
        rhs(tmp, k2, n, N, A, S, E, ESS, obs, ctl, theta, grav, plants)
        for j in range(dim):
            tmp[j] = x[j] + 0.5 * h * k2[j]
        rhs(tmp, k3, n, N, A, S, E, ESS, obs, ctl, theta, grav, plants)
        for j in range(dim):
            tmp[j] = x[j] + h * k3[j]
        rhs(tmp, k4, n, N, A, S, E, ESS, obs, ctl, theta, grav, plants)
        big = 0.0
        finite = True
        for j in range(dim):
            x[j] = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            if not np.isfinite(x[j]):
                finite = False
            elif abs(x[j]) > big:
                big = abs(x[j])
        done = step + 1
        if not finite:
            status = NONFINITE
            break
        if big > blowup:
            status = DIVERGED
            break
        errors(x, n, N, E, ES, obs_err, pos_err, vel_err)
        for i in range(N):
            if obs_err[i] >= tol:
                last[0, i] = done
            if pos_err[i] >= tol:
                last[1, i] = done
            if vel_err[i] >= tol:
                last[2, i] = done
        if done % record_every == 0:
            r = done // record_every
            states[r] = x
            V[r] = lyapunov(x, n, N, A, obs, d)
    return states, V, last, status, done


@njit(cache=True, nogil=True)
def rhs_once(x, n, N, A, S, E, ESS, obs, ctl, theta, grav, plants):
    out = np.empty(x.shape[0])
    rhs(x, out, n, N, A, S, E, ESS, obs, ctl, theta, grav, plants)
    return out
