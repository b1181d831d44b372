"""Gradient flow of the penalized cost, homogeneous and annealed.

The density evolves by::

    d/dt rho(x) = sum_y L(x,y) theta(rho(x), rho(y)) grad[beta_t U + phi'(rho)](x, y)

Using ``theta * grad[phi'(rho)] = grad rho`` the entropy part is written as
the plain heat-flow term, which keeps the mass exactly conserved and avoids
cancellation between large ``phi'`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate

from . import _kernels
from .entropy import EntropyFamily, kappa
from .errors import DomainError, StepFailure, WindowTooShort
from .functionals import cost, gap_G, gap_I, mobility_matrix
from .model import Density, EnergyLandscape, as_rho, minimizer_set, osc
from .stationary import solve_eta

POWER = "power"
CONSTANT = "constant"
CUSTOM = "custom"


@dataclass(frozen=True)
class Schedule:
    """Inverse-temperature curve ``t -> beta_t``.

    Use the constructors :meth:`power`, :meth:`constant` and
    :meth:`custom`.

    Attributes
    ----------
    form : str
        ``"power"`` for ``(t0 + t)**alpha - 1``, ``"constant"`` or ``"custom"``.
    """

    form: str
    t0: float = 1.0
    alpha: float = 0.25
    beta_value: float = 0.0
    curve: Callable[[float], float] | None = None
    derivative: Callable[[float], float] | None = None
    antiderivative: Callable[[float], float] | None = None

    @classmethod
    def power(cls, t0: float = 1.0, alpha: float = 0.25, m: float | None = None, guaranteed: bool = False) -> "Schedule":
        """``beta_t = (t0 + t)**alpha - 1``.

        Parameters
        ----------
        m : float, optional
            Entropy exponent; with ``guaranteed=True`` the exponent must
            satisfy ``alpha <= kappa(m)``.
        """
        if t0 < 1:
            raise DomainError("t0 must be at least 1")
        if not alpha > 0:
            raise DomainError("alpha must be positive")
        if guaranteed:
            if m is None:
                raise DomainError("guaranteed mode needs m")
            if alpha > kappa(m):
                raise DomainError(f"alpha={alpha} exceeds kappa(m)={kappa(m)}")
        return cls(POWER, t0=float(t0), alpha=float(alpha))

    @classmethod
    def constant(cls, beta: float) -> "Schedule":
        if beta < 0:
            raise DomainError("beta must be nonnegative")
        return cls(CONSTANT, beta_value=float(beta))

    @classmethod
    def custom(cls, curve, derivative, antiderivative=None) -> "Schedule":
        """Arbitrary nondecreasing curve with its derivative.

        ``antiderivative(t)`` should return the integral of ``beta`` over
        ``[0, t]``; numerical quadrature is used when omitted.
        """
        return cls(CUSTOM, curve=curve, derivative=derivative, antiderivative=antiderivative)

    def beta(self, t):
        if self.form == POWER:
            return (self.t0 + np.asarray(t, dtype=float)) ** self.alpha - 1.0
        if self.form == CONSTANT:
            return np.full_like(np.asarray(t, dtype=float), self.beta_value) + 0.0
        return self.curve(t)

    def beta_dot(self, t):
        if self.form == POWER:
            return self.alpha * (self.t0 + np.asarray(t, dtype=float)) ** (self.alpha - 1.0)
        if self.form == CONSTANT:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.derivative(t)

    def beta_integral(self, t: float) -> float:
        """Integral of ``beta`` over ``[0, t]``."""
        if self.form == POWER:
            a1 = self.alpha + 1.0
            return ((self.t0 + t) ** a1 - self.t0**a1) / a1 - t
        if self.form == CONSTANT:
            return self.beta_value * t
        if self.antiderivative is not None:
            return float(self.antiderivative(t))
        val, _ = sp_integrate.quad(lambda s: float(self.curve(s)), 0.0, t, limit=200)
        return val

    @property
    def beta0(self) -> float:
        return float(self.beta(0.0))

    def admissible(self, m: float) -> bool:
        """Whether the power exponent lies in ``(0, kappa(m)]``."""
        return self.form != POWER or self.alpha <= kappa(m)

    def regime(self, m: float) -> str:
        """Which convergence statement covers this power schedule."""
        if self.form != POWER:
            return "not a power schedule"
        k = kappa(m)
        if self.alpha < k:
            return "alpha < kappa: convergence with polynomial rates"
        if self.alpha == k:
            return "alpha = kappa: convergence, no rate for the gap"
        return "alpha > kappa: outside the guaranteed regime"


@dataclass(frozen=True)
class Controls:
    """Step-size controls for the adaptive Runge-Kutta integrator.

    Attributes
    ----------
    rtol, atol : float
        Local error tolerances of the embedded 4(5) pair.
    h0 : float
        First trial step.
    cap_coef : float
        Steps are capped at ``cap_coef / (max|L(x,x)| (1 + beta_t))``;
        zero disables the cap.
    h_min : float
        Below this step the integrator gives up with :class:`StepFailure`.
    max_steps : int
    """

    rtol: float = 1e-9
    atol: float = 1e-12
    h0: float = 1e-3
    cap_coef: float = 0.0
    h_min: float = 1e-14
    max_steps: int = 200_000_000


@dataclass
class Trajectory:
    """Densities and diagnostics on a time grid.

    Attributes
    ----------
    times : (k,) ndarray
    densities : (k, n) ndarray
    beta : (k,) ndarray
    cost, gap_I, gap_G, mass_on_min, rho_min : (k,) ndarray
        Penalized cost, excess cost over the current minimizer, dissipation,
        mass of the minimizer set and smallest density value.
    nu : (k, n) ndarray
        Minimizer of the cost at each stored ``beta``.
    stats : dict
        Step counters and, in homogeneous mode, ``max_cost_increase`` over
        all accepted steps.
    """

    times: np.ndarray
    densities: np.ndarray
    beta: np.ndarray
    cost: np.ndarray
    gap_I: np.ndarray
    gap_G: np.ndarray
    mass_on_min: np.ndarray
    rho_min: np.ndarray
    nu: np.ndarray
    mode: str
    m: float
    ell: np.ndarray
    minimizers: np.ndarray
    stats: dict = field(default_factory=dict)
    schedule: Schedule | None = None
    osc_U: float = 0.0

    def measure(self, k: int) -> np.ndarray:
        return self.densities[k] * self.ell

    @property
    def final(self) -> Density:
        return Density(self.densities[-1], self.ell)

    def sandwich_margin(self) -> np.ndarray:
        """``gap_I - 1/2 ||rho - nu||^2`` in ``L2(ell)``; nonnegative in theory."""
        half_sq = 0.5 * ((self.densities - self.nu) ** 2 * self.ell).sum(axis=1)
        return self.gap_I - half_sq

    def annealed_bound(self) -> np.ndarray:
        """``osc U (beta_t - beta_0) + I_0`` at every stored time."""
        return self.osc_U * (self.beta - self.beta[0]) + self.gap_I[0]

    def ratio_off_min(self) -> np.ndarray:
        """``rho / nu`` on states outside the minimizer set."""
        off = np.setdiff1d(np.arange(self.ell.size), self.minimizers)
        return self.densities[:, off] / self.nu[:, off]

    def floor_check(self, split: float = 0.5) -> dict:
        """Fit ``K`` in ``rho_min**(-m) >= 1 / (K (beta + 1))`` on early times.

        ``K`` is the smallest constant valid on the first ``split`` fraction
        of the stored times (by count, ``t > 0``); the check passes when the
        remaining times also satisfy the floor with that ``K``.
        """
        sel = self.times > 0
        q = self.rho_min[sel] ** self.m / (self.beta[sel] + 1.0)
        cut = max(1, int(split * q.size))
        k_hat = float(q[:cut].max())
        return {"K_hat": k_hat, "late_max": float(q[cut:].max(initial=0.0)), "passed": bool(np.all(q[cut:] <= k_hat))}

    def boundedness_check(self, final_decades: float = 2.0) -> dict:
        """Compare the gap over the last decades with its maximum before them."""
        t_end = self.times[-1]
        late = self.times >= t_end / 10**final_decades
        early = ~late
        if not early.any():
            raise WindowTooShort("no stored times before the final window")
        i_hat = float(self.gap_I[early].max())
        return {"I0_hat": i_hat, "late_max": float(self.gap_I[late].max()), "passed": bool(np.all(self.gap_I[late] <= i_hat))}


def rhs(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho) -> np.ndarray:
    """Right-hand side ``F(rho)`` of the density flow at fixed ``beta``."""
    rho = as_rho(rho)
    th = mobility_matrix(fam, rho)
    off = land.generator - np.diag(np.diag(land.generator))
    dU = land.objective[None, :] - land.objective[:, None]
    drho = rho[None, :] - rho[:, None]
    return (off * (th * beta * dU + drho)).sum(axis=1)


def geometric_grid(first: float, horizon: float, per_decade: int = 10, include_zero: bool = True) -> np.ndarray:
    """``first * r**k`` up to ``horizon`` with ``per_decade`` points per decade."""
    if not 0 < first <= horizon:
        raise DomainError("need 0 < first <= horizon")
    k = int(math.ceil(per_decade * math.log10(horizon / first) - 1e-9))
    grid = first * 10.0 ** (np.arange(k + 1) / per_decade)
    grid[-1] = horizon
    grid = np.unique(np.minimum(grid, horizon))
    return np.concatenate([[0.0], grid]) if include_zero else grid


def _diagnostics(land, fam, schedule, times, Y, mode, stats) -> Trajectory:
    betas = np.atleast_1d(np.asarray(schedule.beta(times), dtype=float)) * np.ones_like(times)
    M = minimizer_set(land)
    k = len(times)
    costs = np.empty(k)
    gi = np.empty(k)
    gg = np.empty(k)
    nu = np.empty_like(Y)
    cache: dict[float, np.ndarray] = {}
    for j in range(k):
        b = float(betas[j])
        if b not in cache:
            cache[b] = solve_eta(land, fam, b).rho
        nu[j] = cache[b]
        costs[j] = cost(land, fam, b, Y[j])
        gi[j] = gap_I(land, fam, b, Y[j], nu[j])
        gg[j] = gap_G(land, fam, b, Y[j])
    return Trajectory(
        times=np.asarray(times, dtype=float),
        densities=Y,
        beta=betas,
        cost=costs,
        gap_I=gi,
        gap_G=gg,
        mass_on_min=(Y[:, M] * land.ell[M]).sum(axis=1),
        rho_min=Y.min(axis=1),
        nu=nu,
        mode=mode,
        m=fam.m,
        ell=np.asarray(land.ell),
        minimizers=M,
        stats=stats,
        schedule=schedule,
        osc_U=osc(land.objective),
    )


def _snapshot_times(horizon, times):
    if times is None:
        times = geometric_grid(min(1e-2, horizon), horizon, 10)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise DomainError("snapshot times must be increasing and nonnegative")
    if times[-1] > horizon:
        raise DomainError("snapshot times exceed the horizon")
    if times[-1] < horizon:
        times = np.append(times, horizon)
    return times


def _run_kernel(land, fam, schedule, rho0, times, controls, track_cost):
    src, dst = land.edges
    keep = src < dst
    src, dst = src[keep], dst[keep]
    rate = np.ascontiguousarray(land.generator[src, dst])
    rate_back = np.ascontiguousarray(land.generator[dst, src])
    kind = _kernels.SCHEDULE_CONSTANT if schedule.form == CONSTANT else _kernels.SCHEDULE_POWER
    Y, acc, rej, halv, max_inc, status, t_reached = _kernels.integrate_density(
        src.astype(np.int64), dst.astype(np.int64), rate, rate_back,
        np.ascontiguousarray(land.objective, dtype=float), np.ascontiguousarray(land.ell, dtype=float), float(fam.m),
        kind, float(schedule.t0), float(schedule.alpha), float(schedule.beta_value),
        np.array(rho0, dtype=float), 0.0, times,
        controls.rtol, controls.atol, controls.h0, controls.cap_coef, land.sup_rate,
        controls.h_min, int(controls.max_steps), track_cost,
    )
    stats = {"accepted": int(acc), "rejected": int(rej), "halvings": int(halv), "t_reached": float(t_reached)}
    if track_cost:
        stats["max_cost_increase"] = float(max_inc)
    if status == _kernels.STATUS_STEP_FAILURE:
        raise StepFailure(f"positivity lost below the minimum step at t={t_reached:.6g}")
    if status == _kernels.STATUS_MAX_STEPS:
        raise StepFailure(f"step budget exhausted at t={t_reached:.6g}")
    return Y, stats


def _run_generic(land, fam, schedule, rho0, times, controls, track_cost):
    def field_(t, y):
        return rhs(land, fam, float(schedule.beta(t)), y)

    def cap(t):
        if controls.cap_coef <= 0:
            return np.inf
        return controls.cap_coef / (land.sup_rate * (1.0 + float(schedule.beta(t))))

    hook = None
    last = {"cost": cost(land, fam, float(schedule.beta(0.0)), rho0), "max": -np.inf}
    if track_cost:
        def hook(t, y):
            c = cost(land, fam, float(schedule.beta(t)), y)
            last["max"] = max(last["max"], c - last["cost"])
            last["cost"] = c

    Y, stats = rkf45(field_, rho0, times, controls, weights=land.ell, step_cap=cap, on_accept=hook)
    if track_cost:
        stats["max_cost_increase"] = float(last["max"])
    return Y, stats


def rkf45(fun, y0, times, controls: Controls = Controls(), weights=None, step_cap=None, on_accept=None, positive: bool = True):
    """Adaptive Runge-Kutta-Fehlberg 4(5) for a generic vector field.

    The fourth-order solution is propagated.  Trial steps producing a
    nonpositive coordinate (when ``positive``) or a mass drift above 1e-10
    (when ``weights`` is given) are halved.  Accepted states are rescaled
    to unit mass.  The integrator lands exactly on every entry of ``times``.

    Returns
    -------
    Y : (len(times), n) ndarray
    stats : dict
    """
    K = _kernels
    times = np.asarray(times, dtype=float)
    y = np.array(y0, dtype=float)
    w = None if weights is None else np.asarray(weights, dtype=float)
    Y = np.empty((times.size, y.size))
    t = 0.0 if times[0] >= 0 else times[0]
    h = controls.h0
    acc = rej = halv = steps = 0
    j = 0
    while j < times.size and times[j] <= t:
        Y[j] = y
        j += 1
    while j < times.size:
        target = times[j]
        while t < target:
            steps += 1
            if steps > controls.max_steps:
                raise StepFailure(f"step budget exhausted at t={t:.6g}")
            if step_cap is not None:
                h = min(h, step_cap(t))
            h_free = h
            last = t + h >= target
            if last:
                h = target - t
            k1 = fun(t, y)
            k2 = fun(t + K.C2 * h, y + h * K.A21 * k1)
            k3 = fun(t + K.C3 * h, y + h * (K.A31 * k1 + K.A32 * k2))
            k4 = fun(t + K.C4 * h, y + h * (K.A41 * k1 + K.A42 * k2 + K.A43 * k3))
            k5 = fun(t + K.C5 * h, y + h * (K.A51 * k1 + K.A52 * k2 + K.A53 * k3 + K.A54 * k4))
            k6 = fun(t + K.C6 * h, y + h * (K.A61 * k1 + K.A62 * k2 + K.A63 * k3 + K.A64 * k4 + K.A65 * k5))
            ynew = y + h * (K.B1 * k1 + K.B3 * k3 + K.B4 * k4 + K.B5 * k5)
            err_vec = h * (K.E1 * k1 + K.E3 * k3 + K.E4 * k4 + K.E5 * k5 + K.E6 * k6)
            mass = 1.0 if w is None else float(ynew @ w)
            if (positive and not np.all(ynew > 0)) or (w is not None and abs(mass - 1.0) > 1e-10):
                halv += 1
                h *= 0.5
                if h < controls.h_min:
                    raise StepFailure(f"positivity lost below the minimum step at t={t:.6g}")
                continue
            scale = controls.atol + controls.rtol * np.maximum(np.abs(y), np.abs(ynew))
            err = float(np.max(np.abs(err_vec) / scale))
            if not np.isfinite(err):
                err = np.inf
            if err <= 1.0:
                acc += 1
                t = target if last else t + h
                y = ynew / mass
                if on_accept is not None:
                    on_accept(t, y)
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err**-0.2))
                h = h_free if last else h * fac
            else:
                rej += 1
                h *= 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err**-0.25)
                if h < controls.h_min:
                    raise StepFailure(f"error control failed below the minimum step at t={t:.6g}")
        Y[j] = y
        j += 1
    return Y, {"accepted": acc, "rejected": rej, "halvings": halv, "t_reached": t}


def _integrate(land, fam, schedule, rho0, horizon, controls, times, mode, compiled):
    fam.require_main()
    rho0 = as_rho(rho0)
    Density(rho0, land.ell)
    times = _snapshot_times(horizon, times)
    if times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    track = mode == "homogeneous"
    use_kernel = compiled and schedule.form in (POWER, CONSTANT)
    runner = _run_kernel if use_kernel else _run_generic
    Y, stats = runner(land, fam, schedule, rho0, times, controls, track)
    stats["compiled"] = use_kernel
    return _diagnostics(land, fam, schedule, times, Y, mode, stats)


def integrate_homogeneous(
    land: EnergyLandscape,
    fam: EntropyFamily,
    beta: float,
    rho0,
    horizon: float,
    controls: Controls = Controls(),
    times=None,
    compiled: bool = True,
) -> Trajectory:
    """Integrate the flow at fixed ``beta`` on ``[0, horizon]``.

    Parameters
    ----------
    times : array_like, optional
        Snapshot times; a geometric grid by default.  The horizon is always
        included.
    compiled : bool
        Use the compiled kernel (default) or the generic integrator.

    Raises
    ------
    StepFailure
        If positivity cannot be kept at the minimum step size.
    """
    return _integrate(land, fam, Schedule.constant(beta), rho0, horizon, controls, times, "homogeneous", compiled)


def integrate_annealed(
    land: EnergyLandscape,
    fam: EntropyFamily,
    schedule: Schedule,
    rho0,
    horizon: float,
    controls: Controls = Controls(),
    times=None,
    compiled: bool = True,
) -> Trajectory:
    """Integrate the flow with ``beta_t`` following ``schedule``.

    Custom schedules use the generic integrator.
    """
    mode = "homogeneous" if schedule.form == CONSTANT else "annealed"
    return _integrate(land, fam, schedule, rho0, horizon, controls, times, mode, compiled)


@dataclass
class RateFit:
    """Log-log slopes over a time window with their theoretical targets."""

    window: tuple
    mass_deficit_slope: float
    gap_slope: float
    mass_deficit_target: float
    gap_target: float
    slack: float = 0.3

    @property
    def mass_ok(self) -> bool:
        return self.mass_deficit_slope <= self.mass_deficit_target + self.slack

    @property
    def gap_ok(self) -> bool:
        return self.gap_slope <= self.gap_target + self.slack


def convergence_rate_fit(traj: Trajectory, window=(1e2, 1e5), slack: float = 0.3) -> RateFit:
    """Least-squares slopes of ``log(1 - mu[M])`` and ``log I`` against ``log t``.

    Raises
    ------
    WindowTooShort
        If the stored times inside ``window`` span under two decades.
    """
    if traj.schedule is None or traj.schedule.form != POWER:
        raise DomainError("rate fit needs a power schedule")
    lo, hi = window
    sel = (traj.times >= lo) & (traj.times <= hi)
    ts = traj.times[sel]
    if ts.size < 3 or math.log10(ts[-1] / ts[0]) < 2.0 - 1e-9:
        raise WindowTooShort("window must span at least two decades of stored times")
    lt = np.log(ts)
    deficit = 1.0 - traj.mass_on_min[sel]
    gap = traj.gap_I[sel]
    s_mass = float(np.polyfit(lt, np.log(deficit), 1)[0])
    s_gap = float(np.polyfit(lt, np.log(gap), 1)[0])
    alpha = traj.schedule.alpha
    m = traj.m
    return RateFit(
        window=(float(ts[0]), float(ts[-1])),
        mass_deficit_slope=s_mass,
        gap_slope=s_gap,
        mass_deficit_target=-alpha / (1.0 - m),
        gap_target=2.0 * alpha / kappa(m) - 2.0,
        slack=slack,
    )
