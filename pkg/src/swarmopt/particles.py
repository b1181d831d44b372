"""Exact jump-process samplers and the interacting particle swarm.

Linear chains are sampled by exponential holding times (constant rates) or
by inverting the integrated exit rate (time-dependent rates).  The swarm
approximates the nonlinear dynamics: each particle jumps with the
generator evaluated at the current smoothed empirical density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate

from .entropy import EntropyFamily
from .errors import DomainError
from .functionals import mobility_matrix
from .generators import FIRST, HYBRID, SECOND
from .model import EnergyLandscape, check_measure

INVERSION_TOL = 1e-12


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise DomainError("a seed is required")
    return np.random.default_rng(seed)


@dataclass
class Path:
    """Piecewise-constant trajectory: ``states[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    states: np.ndarray
    horizon: float

    def state_at(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.states[max(k, 0)])

    @property
    def holding_times(self) -> np.ndarray:
        """Completed holding times (the final censored segment is dropped)."""
        return np.diff(self.times)


def sample_homogeneous(gen, m0, horizon: float, seed) -> Path:
    """Sample a path of the chain with constant generator ``gen``.

    Holding times at ``x`` are exponential with rate ``-gen[x, x]``; the next
    state is drawn from the off-diagonal row.  A zero row is absorbing.
    """
    gen = np.asarray(gen, dtype=float)
    rng = _rng(seed)
    x = int(rng.choice(gen.shape[0], p=np.asarray(m0, dtype=float)))
    t = 0.0
    times = [0.0]
    states = [x]
    while True:
        rate = -gen[x, x]
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            break
        row = np.maximum(gen[x], 0.0)
        row[x] = 0.0
        x = int(rng.choice(row.size, p=row / row.sum()))
        times.append(t)
        states.append(x)
    return Path(np.array(times), np.array(states, dtype=int), float(horizon))


def sample_marginal(gen, m0, t: float, n_paths: int, seed) -> np.ndarray:
    """Empirical law at time ``t`` of ``n_paths`` independent homogeneous paths.

    Vectorized over paths; statistically identical to repeated
    :func:`sample_homogeneous` calls.
    """
    gen = np.asarray(gen, dtype=float)
    n = gen.shape[0]
    rng = _rng(seed)
    x = rng.choice(n, size=n_paths, p=np.asarray(m0, dtype=float))
    clock = np.zeros(n_paths)
    exit_rate = -np.diag(gen)
    jump = np.maximum(gen, 0.0)
    np.fill_diagonal(jump, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cdf = np.cumsum(jump / jump.sum(axis=1, keepdims=True), axis=1)
    active = exit_rate[x] > 0
    while active.any():
        idx = np.flatnonzero(active)
        clock[idx] += rng.exponential(1.0, idx.size) / exit_rate[x[idx]]
        moved = idx[clock[idx] <= t]
        u = rng.random(moved.size)
        rows = cdf[x[moved]]
        x[moved] = np.minimum((rows < u[:, None]).sum(axis=1), n - 1)
        active = np.zeros(n_paths, dtype=bool)
        active[moved] = exit_rate[x[moved]] > 0
    return np.bincount(x, minlength=n) / n_paths


def invert_integrated_rate(Lam: Callable[[float], float], rate: Callable[[float], float], lo: float, hi: float, target: float, tol: float = INVERSION_TOL) -> float:
    """Solve ``Lam(s) = target`` on ``[lo, hi]`` for nondecreasing ``Lam``.

    Newton steps on the bracket, falling back to bisection whenever a step
    leaves the bracket or the rate vanishes.  Requires
    ``Lam(lo) <= target <= Lam(hi)``.
    """
    a, b = lo, hi
    s = lo + (hi - lo) * 0.5
    r0 = rate(lo)
    if r0 > 0 and lo + (target - Lam(lo)) / r0 < hi:
        # first Newton step from the left end; never short of the root for a nondecreasing rate
        s = lo + (target - Lam(lo)) / r0
    scale = max(1.0, abs(target))
    for _ in range(400):
        f = Lam(s) - target
        if abs(f) <= tol * scale:
            return s
        if f < 0:
            a = s
        else:
            b = s
        r = rate(s)
        # the time grid itself cannot resolve a smaller correction
        if r > 0 and abs(f) <= 4 * np.finfo(float).eps * abs(s) * r:
            return s
        cand = s - f / r if r > 0 else np.nan
        if not (a < cand < b):
            cand = 0.5 * (a + b)
        if cand == s or b - a <= 4 * np.finfo(float).eps * max(1.0, abs(s)):
            return cand
        s = cand
    return s


def _exit_rate_integral(curve, x, t, s):
    val, _ = sp_integrate.quad(lambda u: -float(curve(u)[x, x]), t, s, limit=200, epsabs=1e-14, epsrel=1e-13)
    return val


def sample_inhomogeneous(curve, m0, horizon: float, seed, exit_integral=None) -> Path:
    """Sample a path of the chain with generator ``curve(t)``.

    Each jump time solves ``int_t^tau |L_s(x, x)| ds = E`` with ``E``
    standard exponential.

    Parameters
    ----------
    curve : callable
        ``t -> (n, n)`` generator.
    exit_integral : callable, optional
        ``(x, t, s) -> int_t^s |L_u(x, x)| du`` in closed form; quadrature
        is used otherwise.
    """
    rng = _rng(seed)
    n = np.asarray(curve(0.0)).shape[0]
    integral = exit_integral or (lambda x, a, b: _exit_rate_integral(curve, x, a, b))
    x = int(rng.choice(n, p=np.asarray(m0, dtype=float)))
    t = 0.0
    times = [0.0]
    states = [x]
    while t < horizon:
        E = rng.exponential(1.0)
        total = integral(x, t, horizon)
        if total < E:
            break
        xx, tt = x, t
        tau = invert_integrated_rate(
            lambda s: integral(xx, tt, s),
            lambda s: -float(curve(s)[xx, xx]),
            t, horizon, E,
        )
        row = np.maximum(np.asarray(curve(tau), dtype=float)[x], 0.0)
        row[x] = 0.0
        x = int(rng.choice(n, p=row / row.sum()))
        t = tau
        times.append(t)
        states.append(x)
    return Path(np.array(times), np.array(states, dtype=int), float(horizon))


# ----------------------------------------------------------------------
# swarm


@dataclass
class SwarmConfig:
    """Settings for :func:`simulate_swarm`.

    Attributes
    ----------
    N : int
        Number of particles.
    kind : str
        ``"first"``, ``"second"`` or ``"hybrid"``.
    a : float or callable
        Hybrid weight, constant or ``t -> a_t``.
    beta : float, optional
        Fixed inverse temperature; exclusive with ``schedule``.
    schedule : Schedule, optional
    horizon : float
    seed : int
    snapshot_times : array_like, optional
        Defaults to 16 equally spaced times including 0 and the horizon.
    initial : array_like, optional
        Law of the initial positions; ``ell`` by default.
    epsilon : float
        Additive smoothing of the empirical density.
    race : str
        ``"total"`` samples the next event from the total rate;
        ``"per_particle"`` races one clock per particle.
    log_cap : int
        Maximum number of logged events (all events are still counted).
    """

    N: int = 50
    kind: str = SECOND
    a: float | Callable[[float], float] = 0.5
    beta: float | None = None
    schedule: object = None
    horizon: float = 1.0
    seed: int | None = None
    snapshot_times: object = None
    initial: object = None
    epsilon: float = 0.5
    race: str = "total"
    log_cap: int = 1_000_000

    def validate(self, n: int) -> None:
        if self.N < 1:
            raise DomainError("N must be at least 1")
        if self.kind not in (FIRST, SECOND, HYBRID):
            raise DomainError(f"unknown kind {self.kind!r}")
        if (self.beta is None) == (self.schedule is None):
            raise DomainError("give exactly one of beta and schedule")
        if self.seed is None:
            raise DomainError("seed is required")
        if self.epsilon <= 0:
            raise DomainError("epsilon must be positive")
        if self.race not in ("total", "per_particle"):
            raise DomainError(f"unknown race {self.race!r}")
        if not callable(self.a) and not 0.0 <= self.a <= 1.0:
            raise DomainError("hybrid weight must lie in [0, 1]")


@dataclass
class SwarmResult:
    """Snapshots of the empirical law and the event log.

    Attributes
    ----------
    snapshot_times : (k,) ndarray
    empirical : (k, n) ndarray
        Fraction of particles in each state.
    events : (e, 5) ndarray
        Columns ``index, t, particle, from, to`` for the first ``log_cap``
        events.
    n_events : int
    """

    snapshot_times: np.ndarray
    empirical: np.ndarray
    events: np.ndarray
    n_events: int
    N: int
    final_positions: np.ndarray
    stats: dict = field(default_factory=dict)


def smoothed_density(counts, ell, epsilon: float) -> np.ndarray:
    """``(counts + eps) / ((N + eps n) ell)``: positive with unit mass."""
    counts = np.asarray(counts, dtype=float)
    N = counts.sum()
    return (counts + epsilon) / ((N + epsilon * counts.size) * np.asarray(ell))


class _RateModel:
    """Off-diagonal swarm rates as ``w * max(0, c + d beta)`` at a frozen density."""

    def __init__(self, land: EnergyLandscape, fam: EntropyFamily, kind: str):
        self.land = land
        self.fam = fam
        self.kind = kind
        base = np.array(land.generator, dtype=float)
        np.fill_diagonal(base, 0.0)
        self.base = base
        U = land.objective
        self.dU = U[None, :] - U[:, None]

    def coefficients(self, rho, a):
        """Return ``(w, c, d)`` stacked over first and second kinds."""
        th = mobility_matrix(self.fam, rho)
        ratio = th / rho[:, None]
        # first kind: L (1 - rho_y/rho_x - theta/rho_x beta dU)_+ ... as max(0, c + d beta)
        c1 = 1.0 - rho[None, :] / rho[:, None]
        d1 = -ratio * self.dU
        c2 = np.ones_like(c1)
        d2 = ratio * np.maximum(0.0, -self.dU)
        w1 = (1.0 - a) * self.base
        w2 = a * self.base
        return np.stack([w1, w2]), np.stack([c1, c2]), np.stack([d1, d2])

    @staticmethod
    def weight_of(kind, a):
        if kind == FIRST:
            return 0.0
        if kind == SECOND:
            return 1.0
        return a

    @staticmethod
    def rates(w, c, d, beta):
        return (w * np.maximum(0.0, c + d * beta)).sum(axis=0)


def _power_inverse(schedule, b):
    return (b + 1.0) ** (1.0 / schedule.alpha) - schedule.t0


def _beta_between(schedule, lo, hi):
    """Integral of ``beta`` over ``[lo, hi]`` for a power schedule, free of cancellation."""
    a1 = schedule.alpha + 1.0
    base = schedule.t0 + lo
    return base**a1 * np.expm1(a1 * np.log1p((hi - lo) / base)) / a1 - (hi - lo)


def _hinge_integral(w, c, d, t, s, schedule):
    """``sum w int_t^s max(0, c + d beta_u) du`` in closed form for power/constant schedules."""
    if s <= t:
        return 0.0
    if schedule.form == "constant":
        return float((w * np.maximum(0.0, c + d * schedule.beta_value)).sum() * (s - t))
    bt, bs = float(schedule.beta(t)), float(schedule.beta(s))
    with np.errstate(divide="ignore", invalid="ignore"):
        b_star = np.where(d != 0, -c / d, 0.0)
    lo = np.full(c.shape, float(t))
    hi = np.full(c.shape, float(s))
    # d > 0: positive once beta passes b_star; d < 0: positive until then
    rise = (d > 0) & (b_star > bt)
    fall = (d < 0) & (b_star < bs)
    with np.errstate(invalid="ignore"):
        lo = np.where(rise, np.minimum(s, _power_inverse(schedule, np.where(rise, b_star, 0.0))), lo)
        hi = np.where(fall, np.maximum(t, _power_inverse(schedule, np.where(fall, b_star, 0.0))), hi)
    active = np.where(d > 0, c + d * bs > 0, np.where(d < 0, c + d * bt > 0, c > 0)) & (hi > lo)
    lo_a = lo[active]
    hi_a = hi[active]
    integral = c[active] * (hi_a - lo_a) + d[active] * _beta_between(schedule, lo_a, hi_a)
    return float((w[active] * np.maximum(integral, 0.0)).sum())


def simulate_swarm(land: EnergyLandscape, fam: EntropyFamily, config: SwarmConfig) -> SwarmResult:
    """Evolve ``N`` interacting particles and record the empirical law.

    Between events the empirical density is frozen, so every particle's
    exit rate depends on time only through ``beta_t``.  The next event time
    inverts the integrated total rate; the jumping particle is chosen with
    probability proportional to its own rate, the target proportionally to
    the row of the generator at the event time.
    """
    fam.require_main()
    n = land.n
    config.validate(n)
    rng = _rng(config.seed)
    from .flow import Schedule

    schedule = config.schedule if config.schedule is not None else Schedule.constant(config.beta)
    horizon = float(config.horizon)
    snaps = np.asarray(
        config.snapshot_times if config.snapshot_times is not None else np.linspace(0.0, horizon, 16), dtype=float
    )
    if np.any(np.diff(snaps) < 0) or snaps[-1] > horizon or snaps[0] < 0:
        raise DomainError("snapshot times must be sorted inside [0, horizon]")
    m0 = check_measure(config.initial if config.initial is not None else land.ell, "initial")
    N = int(config.N)
    positions = rng.choice(n, size=N, p=m0)
    counts = np.bincount(positions, minlength=n)
    members = [list(np.flatnonzero(positions == x)) for x in range(n)]
    slot = np.zeros(N, dtype=np.int64)
    for x in range(n):
        for k, p in enumerate(members[x]):
            slot[p] = k

    if config.race == "total" and not callable(config.a) and schedule.form in ("power", "constant"):
        return _simulate_compiled(land, fam, config, schedule, horizon, snaps, positions, rng)
    model = _RateModel(land, fam, config.kind)
    a_fn = config.a if callable(config.a) else None
    closed_form = a_fn is None and schedule.form in ("power", "constant")
    events = []
    n_events = 0
    empirical = np.empty((snaps.size, n))
    j = 0
    t = 0.0

    def record_until(limit):
        nonlocal j
        while j < snaps.size and snaps[j] <= limit:
            empirical[j] = counts / N
            j += 1

    while True:
        rho = smoothed_density(counts, land.ell, config.epsilon)
        a_now = model.weight_of(config.kind, config.a if a_fn is None else a_fn(t))
        w, c, d = model.coefficients(rho, a_now)
        wc = w * counts[None, :, None]
        nxt = _next_event_time(model, schedule, wc, w, c, d, counts, rho, t, horizon, rng, config, a_fn, closed_form)
        if nxt is None:
            break
        tau, winner = nxt
        record_until(np.nextafter(tau, -np.inf))
        beta_tau = float(schedule.beta(tau))
        if a_fn is not None:
            w, c, d = model.coefficients(rho, model.weight_of(config.kind, a_fn(tau)))
        R = model.rates(w, c, d, beta_tau)
        exit_rates = R.sum(axis=1)
        if winner is not None:
            x = winner
        else:
            pw = counts * exit_rates
            x = int(rng.choice(n, p=pw / pw.sum()))
        k = int(rng.integers(counts[x]))
        p = int(members[x][k])
        y = int(rng.choice(n, p=R[x] / exit_rates[x]))
        # move particle p from x to y
        last = members[x].pop()
        if last != p:
            members[x][k] = last
            slot[last] = k
        slot[p] = len(members[y])
        members[y].append(p)
        counts[x] -= 1
        counts[y] += 1
        positions[p] = y
        if n_events < config.log_cap:
            events.append((n_events, tau, p, x, y))
        n_events += 1
        t = tau
    record_until(horizon)
    ev = np.array(events, dtype=float).reshape(-1, 5)
    return SwarmResult(snaps, empirical, ev, n_events, N, positions.copy(), {"race": config.race})


RANDOM_BATCH = 1 << 16
LOG_CHUNK = 1 << 16


def _simulate_compiled(land, fam, config, schedule, horizon, snaps, positions, rng):
    from . import _kernels as K

    n = land.n
    N = positions.size
    src, dst = land.edges
    src = src.astype(np.int64)
    dst = dst.astype(np.int64)
    rate = np.ascontiguousarray(land.generator[src, dst], dtype=float)
    counts = np.bincount(positions, minlength=n).astype(np.int64)
    order = np.argsort(positions, kind="stable").astype(np.int64)
    slot = np.empty(N, dtype=np.int64)
    slot[order] = np.arange(N)
    start = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    positions = positions.astype(np.int64)
    if schedule.form == "power":
        kind, t0, alpha, beta_c = K.SCHEDULE_POWER, schedule.t0, schedule.alpha, 0.0
    else:
        kind, t0, alpha, beta_c = K.SCHEDULE_CONSTANT, 1.0, 1.0, schedule.beta_value
    a_weight = _RateModel.weight_of(config.kind, config.a)
    empirical = np.empty((snaps.size, n))
    log_cap = int(config.log_cap)
    log = np.empty((min(log_cap, LOG_CHUNK), 5))
    unif = rng.random(RANDOM_BATCH)
    t, snap_idx, log_count, n_events = 0.0, 0, 0, 0
    while True:
        t, snap_idx, log_count, n_events, used, status = K.swarm_events(
            src, dst, rate, land.objective, land.ell, fam.m, a_weight,
            kind, t0, alpha, beta_c, config.epsilon,
            counts, order, slot, start, positions,
            t, horizon, snaps, snap_idx, empirical,
            unif, log, log_count, log_cap, n_events, np.iinfo(np.int64).max, INVERSION_TOL,
        )
        unif = unif[used:]
        if status == K.SWARM_DONE:
            break
        if status == K.SWARM_NEED_RANDOMS:
            # leftovers stay in front so the stream does not depend on batching
            unif = np.concatenate([unif, rng.random(RANDOM_BATCH)])
        elif status == K.SWARM_LOG_FULL:
            grown = np.empty((min(log_cap, 2 * log.shape[0]), 5))
            grown[: log.shape[0]] = log
            log = grown
    return SwarmResult(snaps, empirical, log[:log_count].copy(), int(n_events), N, positions.copy(), {"race": "total", "compiled": True})


def _next_event_time(model, schedule, wc, w, c, d, counts, rho, t, horizon, rng, config, a_fn, closed_form):
    """Next event time, or ``None`` if nothing happens before the horizon.

    Returns ``(tau, state)`` where ``state`` is the winner's state for the
    per-particle race and ``None`` otherwise.
    """
    if config.race == "per_particle":
        return _per_particle_race(model, schedule, w, c, d, counts, t, horizon, rng, a_fn, rho, closed_form)
    E = rng.exponential(1.0)
    Lam, rate = _integrated(model, schedule, wc, c, d, t, a_fn, rho, counts, closed_form)
    if Lam(horizon) < E:
        return None
    return invert_integrated_rate(Lam, rate, t, horizon, E), None


def _integrated(model, schedule, wc, c, d, t, a_fn, rho, counts, closed_form):
    if closed_form:
        def Lam(s):
            return _hinge_integral(wc, c, d, t, s, schedule)

        def rate(s):
            return float(model.rates(wc, c, d, float(schedule.beta(s))).sum())
        return Lam, rate

    def rate(s):
        a = model.weight_of(model.kind, a_fn(s)) if a_fn is not None else None
        if a is None:
            ww = wc
        else:
            ww, _, _ = model.coefficients(rho, a)
            ww = ww * counts[None, :, None]
        return float(model.rates(ww, c, d, float(schedule.beta(s))).sum())

    def Lam(s):
        if s <= t:
            return 0.0
        val, _ = sp_integrate.quad(rate, t, s, limit=200, epsabs=1e-14, epsrel=1e-13)
        return val

    return Lam, rate


def _per_particle_race(model, schedule, w, c, d, counts, t, horizon, rng, a_fn, rho, closed_form):
    # one exponential clock per particle; within a state the earliest clock
    # belongs to the smallest exponential because the integrated rate is shared
    best = None
    n = counts.size
    for x in range(n):
        if counts[x] == 0:
            continue
        E = rng.exponential(1.0, counts[x]).min()
        single = (np.arange(n) == x).astype(float)
        Lam, rate = _integrated(model, schedule, w * single[None, :, None], c, d, t, a_fn, rho, single, closed_form)
        if Lam(horizon) < E:
            continue
        tau = invert_integrated_rate(Lam, rate, t, horizon, E)
        if best is None or tau < best[0]:
            best = (tau, x)
    return best


@dataclass
class AgreementReport:
    """Distance between the swarm's empirical law and the flow marginals."""

    times: np.ndarray
    distance: np.ndarray
    scale: float
    threshold: float

    @property
    def sup_distance(self) -> float:
        return float(self.distance.max())

    @property
    def passed(self) -> bool:
        return bool(np.all(self.distance <= self.threshold))


def l2_distance(land_ell, p, q) -> float:
    """``|| p/ell - q/ell ||`` in ``L2(ell)`` for two laws ``p, q``."""
    ell = np.asarray(land_ell)
    return float(np.sqrt(np.sum((np.asarray(p) - np.asarray(q)) ** 2 / ell)))


def marginal_agreement(land: EnergyLandscape, fam: EntropyFamily, config: SwarmConfig, ode, factor: float = 5.0) -> AgreementReport:
    """Run the swarm on the trajectory's grid and compare laws at every stored time.

    Passes when every distance is at most ``factor / sqrt(N)``.
    """
    cfg = SwarmConfig(**{**config.__dict__, "snapshot_times": ode.times, "horizon": float(ode.times[-1])})
    if cfg.initial is None:
        cfg.initial = ode.densities[0] * land.ell
    res = simulate_swarm(land, fam, cfg)
    dist = np.array([l2_distance(land.ell, res.empirical[k], ode.densities[k] * land.ell) for k in range(ode.times.size)])
    scale = 1.0 / np.sqrt(cfg.N)
    return AgreementReport(np.asarray(ode.times), dist, scale, factor * scale)
