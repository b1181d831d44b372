"""Compiled scalar kernels for the spliced entropy family and the density flow.

These mirror :class:`swarmopt.entropy.EntropyFamily` for the spliced
variant.  They exist only so that long annealed integrations run at
compiled speed; the public API never exposes them directly.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

DIAGONAL_RTOL = 1e-9

# Runge-Kutta-Fehlberg 4(5) tableau
C2, C3, C4, C5, C6 = 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2
A21 = 1 / 4
A31, A32 = 3 / 32, 9 / 32
A41, A42, A43 = 1932 / 2197, -7200 / 2197, 7296 / 2197
A51, A52, A53, A54 = 439 / 216, -8.0, 3680 / 513, -845 / 4104
A61, A62, A63, A64, A65 = -8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40
B1, B3, B4, B5 = 25 / 216, 1408 / 2565, 2197 / 4104, -1 / 5
E1, E3, E4, E5, E6 = 1 / 360, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55

SCHEDULE_CONSTANT = 0
SCHEDULE_POWER = 1

STATUS_OK = 0
STATUS_STEP_FAILURE = 1
STATUS_MAX_STEPS = 2


@njit(cache=True)
def phi(r, m):
    if r >= 1.0:
        return 0.5 * (r - 1.0) ** 2
    return (math.expm1(m * math.log(r)) - m * (r - 1.0)) / (m * (m - 1.0))


@njit(cache=True)
def dphi(r, m):
    if r >= 1.0:
        return r - 1.0
    k = m - 1.0
    return math.expm1(k * math.log(r)) / k


@njit(cache=True)
def d2phi(r, m):
    if r >= 1.0:
        return 1.0
    return r ** (m - 2.0)


@njit(cache=True)
def theta(s, t, m):
    if s == 0.0 or t == 0.0:
        return 0.0
    if abs(s - t) <= DIAGONAL_RTOL * max(s, t):
        return 1.0 / d2phi(0.5 * (s + t), m)
    if s >= 1.0 and t >= 1.0:
        return 1.0
    if s < 1.0 and t < 1.0:
        k = m - 1.0
        q = (s - t) / t
        lr = math.log1p(q) if abs(q) < 0.5 else math.log(s / t)
        d = t**k * math.expm1(k * lr) / k
        return (s - t) / d
    return (s - t) / (dphi(s, m) - dphi(t, m))


@njit(cache=True)
def beta_at(t, kind, t0, alpha, beta_c):
    if kind == SCHEDULE_CONSTANT:
        return beta_c
    return (t0 + t) ** alpha - 1.0


@njit(cache=True)
def density_rhs(rho, beta, src, dst, rate, rate_back, U, m, out):
    # one entry per unordered pair: theta is symmetric
    for i in range(out.size):
        out[i] = 0.0
    for e in range(src.size):
        x = src[e]
        y = dst[e]
        th = theta(rho[x], rho[y], m)
        flux = th * beta * (U[y] - U[x]) + rho[y] - rho[x]
        out[x] += rate[e] * flux
        out[y] -= rate_back[e] * flux


@njit(cache=True)
def total_cost(rho, beta, U, ell, m):
    acc = 0.0
    for i in range(rho.size):
        acc += ell[i] * (beta * U[i] * rho[i] + phi(rho[i], m))
    return acc


@njit(cache=True)
def integrate_density(
    src, dst, rate, rate_back, U, ell, m,
    kind, t0, alpha, beta_c,
    y0, t_start, out_times,
    rtol, atol, h0, cap_coef, sup_rate, h_min, max_steps, track_cost,
):
    """Adaptive RKF45 on the density flow, stopping exactly at ``out_times``.

    ``src < dst`` lists each connected pair once with forward and backward
    rates.  Returns the stored states and counters
    ``(accepted, rejected, halvings, max_cost_increase, status, t_reached)``.
    """
    n = y0.size
    nout = out_times.size
    Y = np.empty((nout, n))
    y = y0.copy()
    t = t_start
    h = h0
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    tmp = np.empty(n)
    ynew = np.empty(n)
    accepted = 0
    rejected = 0
    halvings = 0
    max_inc = -np.inf
    status = 0
    steps = 0
    cost_now = total_cost(y, beta_at(t, kind, t0, alpha, beta_c), U, ell, m) if track_cost else 0.0
    j = 0
    while j < nout and out_times[j] <= t:
        for i in range(n):
            Y[j, i] = y[i]
        j += 1
    while j < nout:
        target = out_times[j]
        while t < target:
            steps += 1
            if steps > max_steps:
                status = 2
                return Y[:j], accepted, rejected, halvings, max_inc, status, t
            b_now = beta_at(t, kind, t0, alpha, beta_c)
            if cap_coef > 0.0:
                cap = cap_coef / (sup_rate * (1.0 + b_now))
                if h > cap:
                    h = cap
            last = False
            h_free = h
            if t + h >= target:
                h = target - t
                last = True
            density_rhs(y, b_now, src, dst, rate, rate_back, U, m, k1)
            for i in range(n):
                tmp[i] = y[i] + h * A21 * k1[i]
            density_rhs(tmp, beta_at(t + C2 * h, kind, t0, alpha, beta_c), src, dst, rate, rate_back, U, m, k2)
            for i in range(n):
                tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
            density_rhs(tmp, beta_at(t + C3 * h, kind, t0, alpha, beta_c), src, dst, rate, rate_back, U, m, k3)
            for i in range(n):
                tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            density_rhs(tmp, beta_at(t + C4 * h, kind, t0, alpha, beta_c), src, dst, rate, rate_back, U, m, k4)
            for i in range(n):
                tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            density_rhs(tmp, beta_at(t + C5 * h, kind, t0, alpha, beta_c), src, dst, rate, rate_back, U, m, k5)
            for i in range(n):
                tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
            density_rhs(tmp, beta_at(t + C6 * h, kind, t0, alpha, beta_c), src, dst, rate, rate_back, U, m, k6)
            positive = True
            mass = 0.0
            err = 0.0
            for i in range(n):
                ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i])
                if not ynew[i] > 0.0:
                    positive = False
                mass += ynew[i] * ell[i]
                e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i])
                sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
                r = abs(e) / sc
                if r > err or r != r:
                    err = r
            if not positive or abs(mass - 1.0) > 1e-10:
                halvings += 1
                h *= 0.5
                if h < h_min:
                    status = 1
                    return Y[:j], accepted, rejected, halvings, max_inc, status, t
                continue
            if err <= 1.0:
                accepted += 1
                t = target if last else t + h
                for i in range(n):
                    y[i] = ynew[i] / mass
                if track_cost:
                    c_new = total_cost(y, beta_at(t, kind, t0, alpha, beta_c), U, ell, m)
                    if c_new - cost_now > max_inc:
                        max_inc = c_new - cost_now
                    cost_now = c_new
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                # a step shortened to land on a snapshot says nothing new
                h = h_free if last else h * fac
            else:
                rejected += 1
                h *= max(0.2, 0.9 * err ** -0.25)
                if h < h_min:
                    status = 1
                    return Y[:j], accepted, rejected, halvings, max_inc, status, t
        for i in range(n):
            Y[j, i] = y[i]
        j += 1
    return Y, accepted, rejected, halvings, max_inc, status, t


# ----------------------------------------------------------------------
# interacting particle swarm

SWARM_DONE = 0
SWARM_NEED_RANDOMS = 1
SWARM_MAX_EVENTS = 2
SWARM_LOG_FULL = 3
UNIFORMS_PER_EVENT = 3


@njit(cache=True)
def beta_between(lo, hi, kind, t0, alpha, beta_c):
    """Integral of ``beta`` over ``[lo, hi]`` without cancellation."""
    if kind == SCHEDULE_CONSTANT:
        return beta_c * (hi - lo)
    a1 = alpha + 1.0
    base = t0 + lo
    return base**a1 * math.expm1(a1 * math.log1p((hi - lo) / base)) / a1 - (hi - lo)


@njit(cache=True)
def beta_inverse(b, t0, alpha):
    return (b + 1.0) ** (1.0 / alpha) - t0


@njit(cache=True)
def hinge_integral(c, d, t, s, kind, t0, alpha, beta_c):
    """``int_t^s max(0, c + d beta_u) du`` for a nondecreasing schedule."""
    if s <= t:
        return 0.0
    if kind == SCHEDULE_CONSTANT:
        v = c + d * beta_c
        return v * (s - t) if v > 0.0 else 0.0
    bt = beta_at(t, kind, t0, alpha, beta_c)
    bs = beta_at(s, kind, t0, alpha, beta_c)
    lo = t
    hi = s
    if d > 0.0:
        if c + d * bs <= 0.0:
            return 0.0
        b_star = -c / d
        if b_star > bt:
            lo = min(s, beta_inverse(b_star, t0, alpha))
    elif d < 0.0:
        if c + d * bt <= 0.0:
            return 0.0
        b_star = -c / d
        if b_star < bs:
            hi = max(t, beta_inverse(b_star, t0, alpha))
    elif c <= 0.0:
        return 0.0
    if hi <= lo:
        return 0.0
    v = c * (hi - lo) + d * beta_between(lo, hi, kind, t0, alpha, beta_c)
    return v if v > 0.0 else 0.0


@njit(cache=True)
def _swarm_integrated(t, s, src, counts, w1, c1, d1, w2, c2, d2, kind, t0, alpha, beta_c):
    acc = 0.0
    for e in range(src.size):
        k = counts[src[e]]
        if k == 0:
            continue
        v = 0.0
        if w1[e] > 0.0:
            v += w1[e] * hinge_integral(c1[e], d1[e], t, s, kind, t0, alpha, beta_c)
        if w2[e] > 0.0:
            v += w2[e] * hinge_integral(c2[e], d2[e], t, s, kind, t0, alpha, beta_c)
        acc += k * v
    return acc


@njit(cache=True)
def _swarm_rate(beta, src, counts, w1, c1, d1, w2, c2, d2, out):
    acc = 0.0
    for e in range(src.size):
        v = w1[e] * max(0.0, c1[e] + d1[e] * beta) + w2[e] * max(0.0, c2[e] + d2[e] * beta)
        v *= counts[src[e]]
        out[e] = v
        acc += v
    return acc


@njit(cache=True)
def _move_particle(p, x, y, order, slot, start, counts):
    # blocks of order[] hold the particles of each state, in state order
    q = slot[p]
    if x < y:
        last = start[x] + counts[x] - 1
        other = order[last]
        order[q] = other
        slot[other] = q
        order[last] = p
        slot[p] = last
        counts[x] -= 1
        for z in range(x + 1, y):
            hole = start[z] - 1
            tail = start[z] + counts[z] - 1
            other = order[tail]
            order[hole] = other
            slot[other] = hole
            order[tail] = p
            slot[p] = tail
            start[z] = hole
        start[y] -= 1
        counts[y] += 1
    else:
        first = start[x]
        other = order[first]
        order[q] = other
        slot[other] = q
        order[first] = p
        slot[p] = first
        start[x] += 1
        counts[x] -= 1
        for z in range(x - 1, y, -1):
            hole = start[z] + counts[z]
            head = start[z]
            other = order[head]
            order[hole] = other
            slot[other] = hole
            order[head] = p
            slot[p] = head
            start[z] += 1
        counts[y] += 1


@njit(cache=True)
def swarm_events(
    src, dst, rate, U, ell, m, a_weight,
    kind, t0, alpha, beta_c, epsilon,
    counts, order, slot, start, positions,
    t, horizon, snaps, snap_idx, empirical,
    unif, log, log_count, log_cap, n_events, max_events, tol,
):
    """Advance the swarm until the horizon or until the uniforms run out.

    Edges are directed; ``a_weight`` is the weight of the second kind.
    Each event consumes three uniforms: the exponential clock, the edge
    and the particle within the source state.  Returns
    ``(t, snap_idx, log_count, n_events, used, status)``.
    """
    n = counts.size
    N = positions.size
    ne = src.size
    rho = np.empty(n)
    c1 = np.empty(ne)
    d1 = np.empty(ne)
    c2 = np.empty(ne)
    d2 = np.empty(ne)
    w1 = np.empty(ne)
    w2 = np.empty(ne)
    r_edge = np.empty(ne)
    ui = 0
    while True:
        if ui + UNIFORMS_PER_EVENT > unif.size:
            return t, snap_idx, log_count, n_events, ui, SWARM_NEED_RANDOMS
        if n_events >= max_events:
            return t, snap_idx, log_count, n_events, ui, SWARM_MAX_EVENTS
        if log_count >= log.shape[0] and log_count < log_cap:
            return t, snap_idx, log_count, n_events, ui, SWARM_LOG_FULL
        denom = N + epsilon * n
        for x in range(n):
            rho[x] = (counts[x] + epsilon) / (denom * ell[x])
        for e in range(ne):
            x = src[e]
            y = dst[e]
            th = theta(rho[x], rho[y], m)
            du = U[y] - U[x]
            c1[e] = 1.0 - rho[y] / rho[x]
            d1[e] = -th / rho[x] * du
            c2[e] = 1.0
            d2[e] = th / rho[x] * (-du if du < 0.0 else 0.0)
            w1[e] = (1.0 - a_weight) * rate[e]
            w2[e] = a_weight * rate[e]
        E = -math.log1p(-unif[ui])
        total = _swarm_integrated(t, horizon, src, counts, w1, c1, d1, w2, c2, d2, kind, t0, alpha, beta_c)
        if total < E:
            ui += 1
            break
        # safeguarded Newton on the monotone integrated rate
        a = t
        b = horizon
        s = t + 0.5 * (horizon - t)
        if kind == SCHEDULE_CONSTANT:
            r0 = _swarm_rate(beta_c, src, counts, w1, c1, d1, w2, c2, d2, r_edge)
            s = t + E / r0
            if s > horizon:
                s = horizon
        else:
            r_start = _swarm_rate(beta_at(t, kind, t0, alpha, beta_c), src, counts, w1, c1, d1, w2, c2, d2, r_edge)
            if r_start > 0.0 and t + E / r_start < horizon:
                s = t + E / r_start
            scale = max(1.0, E)
            for _ in range(400):
                f = _swarm_integrated(t, s, src, counts, w1, c1, d1, w2, c2, d2, kind, t0, alpha, beta_c) - E
                if abs(f) <= tol * scale:
                    break
                if f < 0.0:
                    a = s
                else:
                    b = s
                r = _swarm_rate(beta_at(s, kind, t0, alpha, beta_c), src, counts, w1, c1, d1, w2, c2, d2, r_edge)
                # the time grid itself cannot resolve a smaller correction
                if r > 0.0 and abs(f) <= 4e-16 * abs(s) * r:
                    break
                cand = s - f / r if r > 0.0 else a - 1.0
                if not (a < cand < b):
                    cand = 0.5 * (a + b)
                if cand == s or b - a <= 4e-16 * max(1.0, abs(s)):
                    s = cand
                    break
                s = cand
        tau = s
        while snap_idx < snaps.size and snaps[snap_idx] < tau:
            for x in range(n):
                empirical[snap_idx, x] = counts[x] / N
            snap_idx += 1
        R = _swarm_rate(beta_at(tau, kind, t0, alpha, beta_c), src, counts, w1, c1, d1, w2, c2, d2, r_edge)
        target = unif[ui + 1] * R
        acc = 0.0
        e_pick = -1
        for e in range(ne):
            if r_edge[e] > 0.0:
                e_pick = e
                acc += r_edge[e]
                if acc > target:
                    break
        x = src[e_pick]
        y = dst[e_pick]
        k = int(unif[ui + 2] * counts[x])
        if k >= counts[x]:
            k = counts[x] - 1
        p = order[start[x] + k]
        ui += UNIFORMS_PER_EVENT
        _move_particle(p, x, y, order, slot, start, counts)
        positions[p] = y
        if log_count < log.shape[0]:
            log[log_count, 0] = n_events
            log[log_count, 1] = tau
            log[log_count, 2] = p
            log[log_count, 3] = x
            log[log_count, 4] = y
            log_count += 1
        n_events += 1
        t = tau
    t = horizon
    while snap_idx < snaps.size and snaps[snap_idx] <= horizon:
        for x in range(n):
            empirical[snap_idx, x] = counts[x] / N
        snap_idx += 1
    return t, snap_idx, log_count, n_events, ui, SWARM_DONE


# ----------------------------------------------------------------------
# dissipation-to-gap ratio


@njit(cache=True)
def power_bregman(t, s, m):
    q = (t - s) / s
    # q rounds to -1 once t / s is below machine epsilon
    lr = math.log1p(q) if abs(q) < 0.5 else math.log(t / s)
    return s**m * (math.expm1(m * lr) - m * q) / (m * (m - 1.0))


@njit(cache=True)
def bregman(t, s, m):
    if t < 1.0 and s < 1.0:
        return power_bregman(t, s, m)
    if t >= 1.0 and s >= 1.0:
        return 0.5 * (t - s) ** 2
    d_t1 = power_bregman(t, 1.0, m) if t < 1.0 else 0.5 * (t - 1.0) ** 2
    d_1s = power_bregman(1.0, s, m) if s < 1.0 else 0.5 * (s - 1.0) ** 2
    return d_t1 + d_1s - dphi(s, m) * (t - 1.0)


@njit(cache=True)
def gap_ratio(rho, eta, dphi_eta, src, dst, weight, ell, m, floor):
    """``G/I`` over unordered pairs ``src < dst`` with weights ``ell(x) L(x, y)``."""
    I = 0.0
    for x in range(rho.size):
        I += ell[x] * bregman(rho[x], eta[x], m)
    if not I > floor:
        return np.inf
    G = 0.0
    for e in range(src.size):
        x = src[e]
        y = dst[e]
        d = (dphi(rho[y], m) - dphi_eta[y]) - (dphi(rho[x], m) - dphi_eta[x])
        G += weight[e] * theta(rho[x], rho[y], m) * d * d
    r = G / I
    return r if r == r else np.inf
