"""Numerical checks of the functional inequalities behind the convergence results.

``chi(beta)`` is the infimum of the dissipation-to-gap ratio ``G/I``; it is
estimated from above by multistart local search.  The comparison
inequality ``G_* >= Lambda(rho) I_*`` is checked directly with an
eigensolver for ``Lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .entropy import EntropyFamily
from .errors import DomainError
from .generators import comparison_generator, linearized_generator
from .model import EnergyLandscape, as_rho, spectral_gap, spectral_gap_vector
from .stationary import solve_eta

CHI_TOL = 1e-6
COMPARISON_SLACK = 1e-9
I_FLOOR = 1e-16


@dataclass(frozen=True)
class ChiBudget:
    """Search effort for :func:`estimate_chi`.

    Attributes
    ----------
    starts : int
        Number of local searches.
    maxfev_per_state : int
        Function evaluations per start, per state.
    radii : tuple of float
        Relative sizes of the perturbations of ``eta`` along the
        slowest mode of the linearized generator.
    """

    starts: int = 32
    maxfev_per_state: int = 200
    radii: tuple = (1e-3, 1e-5, 1e-7)


@dataclass
class InequalityReport:
    """Upper estimate of ``chi(beta)`` next to the linearized spectral gap.

    Attributes
    ----------
    chi_estimate : float
        Smallest ratio ``G/I`` found; an upper estimate of ``chi``.
    lambda_linearized : float
        Spectral gap of the linearized generator at ``eta_beta``.
    witness : ndarray
        Density achieving ``chi_estimate``.
    witnesses : list of (ratio, density)
        Best few local minima, sorted.
    """

    beta: float
    chi_estimate: float
    lambda_linearized: float
    witness: np.ndarray
    witnesses: list = field(default_factory=list)
    evaluations: int = 0
    tol: float = CHI_TOL

    @property
    def positive(self) -> bool:
        return self.chi_estimate > 0

    @property
    def below_lambda(self) -> bool:
        """``chi_estimate <= lambda_linearized + tol``."""
        return self.chi_estimate <= self.lambda_linearized + self.tol

    @property
    def below_twice_lambda(self) -> bool:
        """``chi_estimate <= 2 lambda_linearized + tol``, the sharp small-perturbation ceiling."""
        return self.chi_estimate <= 2.0 * self.lambda_linearized + self.tol


class _Ratio:
    """Fast evaluation of ``G(beta, rho) / I(beta, rho)`` on one landscape."""

    def __init__(self, land: EnergyLandscape, fam: EntropyFamily, beta: float, eta):
        fam.require_main()
        self.fam = fam
        self.ell = np.ascontiguousarray(land.ell, dtype=float)
        src, dst = land.edges
        keep = src < dst
        self.src = src[keep].astype(np.int64)
        self.dst = dst[keep].astype(np.int64)
        # each unordered pair appears twice in the double sum; detailed balance makes both equal
        self.weight = land.ell[self.src] * land.generator[self.src, self.dst]
        self.eta = as_rho(eta)
        self.dphi_eta = np.asarray(fam.phi_prime(self.eta))
        self.count = 0

    def parts(self, rho):
        fam = self.fam
        d = np.asarray(fam.phi_prime(rho)) - self.dphi_eta
        th = np.asarray(fam.theta(rho[self.src], rho[self.dst]))
        G = float(np.sum(self.weight * th * (d[self.dst] - d[self.src]) ** 2))
        I = float(np.sum(self.ell * np.asarray(fam.bregman(rho, self.eta))))
        return G, I

    def __call__(self, rho) -> float:
        self.count += 1
        return float(_kernels.gap_ratio(rho, self.eta, self.dphi_eta, self.src, self.dst, self.weight, self.ell, self.fam.m, I_FLOOR))

    def value(self, rho) -> float:
        """Reference evaluation through the entropy family."""
        G, I = self.parts(rho)
        return G / I if I > I_FLOOR else np.inf

    def density(self, z) -> np.ndarray:
        # softmax with the last coordinate pinned at zero
        full = np.append(z, 0.0)
        w = np.exp(full - full.max())
        return w / w.sum() / self.ell

    def coords(self, rho) -> np.ndarray:
        logmu = np.log(as_rho(rho) * self.ell)
        return logmu[:-1] - logmu[-1]


def _gap_direction(land, fam, beta, eta):
    Q, ell_beta = linearized_generator(land, fam, beta, eta)
    lam, f = spectral_gap_vector(Q, ell_beta)
    h = f / np.asarray(fam.phi_second(eta))
    h -= land.ell @ h  # exact zero mean under ell up to rounding
    return lam, h


def estimate_chi(land: EnergyLandscape, fam: EntropyFamily, beta: float, budget: ChiBudget = ChiBudget(), seed: int = 0) -> InequalityReport:
    """Multistart search for ``inf G(beta, rho) / I(beta, rho)`` over interior densities.

    Starts are perturbations of ``eta_beta`` along the slowest linearized
    mode at each radius in ``budget.radii`` (both signs), random
    perturbations of ``eta_beta``, near-boundary densities and Dirichlet
    draws.  Each start runs a Nelder-Mead search in softmax coordinates.
    The smallest value found bounds ``chi`` from above; it is not a
    certified value of ``chi``.
    """
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    fam.require_main()
    rng = np.random.default_rng(seed)
    eta = solve_eta(land, fam, beta).rho
    ratio = _Ratio(land, fam, beta, eta)
    lam, h = _gap_direction(land, fam, beta, eta)
    n = land.n
    scale = eta.min() / max(np.abs(h).max(), 1e-300)

    starts = []
    for eps in budget.radii:
        for sign in (1.0, -1.0):
            starts.append((eta + sign * eps * scale * h, eps))
    kinds = ("local", "boundary", "dirichlet")
    k = 0
    while len(starts) < budget.starts:
        kind = kinds[k % 3]
        k += 1
        if kind == "local":
            r = 10.0 ** rng.uniform(-3, -1)
            rho = eta * np.exp(r * rng.standard_normal(n))
        elif kind == "boundary":
            rho = rng.dirichlet(np.full(n, 0.2)) / land.ell
        else:
            rho = rng.dirichlet(np.ones(n)) / land.ell
        mu = np.clip(rho * land.ell, 1e-12, None)
        starts.append((mu / mu.sum() / land.ell, 0.5))
    starts = starts[: max(budget.starts, 1)]

    results = []
    maxfev = budget.maxfev_per_state * n
    for rho0, size in starts:
        z0 = ratio.coords(rho0)
        value0 = ratio(ratio.density(z0))
        if n == 1:
            results.append((value0, ratio.density(z0)))
            continue
        step = max(size, 1e-8)
        simplex = np.vstack([z0] + [z0 + step * e for e in np.eye(n - 1)])
        res = minimize(
            lambda z: ratio(ratio.density(z)),
            z0,
            method="Nelder-Mead",
            options={"initial_simplex": simplex, "maxfev": maxfev, "xatol": 1e-12, "fatol": 1e-14},
        )
        best = (res.fun, ratio.density(res.x)) if res.fun <= value0 else (value0, ratio.density(z0))
        results.append(best)
    results.sort(key=lambda r: r[0])
    chi, witness = results[0]
    return InequalityReport(float(beta), float(chi), float(lam), witness, results[:5], ratio.count)


def gap_ratio(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho, eta=None) -> float:
    """``G(beta, rho) / I(beta, rho)``; ``inf`` when ``I`` is below ``1e-16``."""
    if eta is None:
        eta = solve_eta(land, fam, beta).rho
    return _Ratio(land, fam, beta, eta)(as_rho(rho))


def rayleigh_quotient_limit(land: EnergyLandscape, fam: EntropyFamily, beta: float, h, eta=None) -> float:
    """Limit of ``G/I`` at ``eta_beta + eps h`` as ``eps -> 0``.

    ``sum ell L theta(eta, eta) (phi''(eta) h)(x) - (phi''(eta) h)(y))**2
    / sum ell phi''(eta) h**2`` with the double sum over ordered pairs.
    Its infimum over ``h`` is ``2 lambda(Q_beta)``.

    Raises
    ------
    DomainError
        If ``ell[h] != 0`` (relative 1e-10) or ``h`` vanishes.
    """
    h = np.asarray(h, dtype=float)
    norm = np.abs(h).max() if h.size else 0.0
    if norm == 0:
        raise DomainError("h must be nonzero")
    if abs(land.ell @ h) > 1e-10 * norm:
        raise DomainError("h must have zero mean under ell")
    if eta is None:
        eta = solve_eta(land, fam, beta).rho
    eta = as_rho(eta)
    d2 = np.asarray(fam.phi_second(eta))
    f = d2 * h
    th = np.asarray(fam.theta(eta[:, None], eta[None, :]))
    w = land.ell[:, None] * land.generator * th
    np.fill_diagonal(w, 0.0)
    num = float(np.sum(w * (f[None, :] - f[:, None]) ** 2))
    return num / float(np.sum(land.ell * d2 * h**2))


def boundary_ratio_path(land: EnergyLandscape, fam: EntropyFamily, beta: float, exponents=range(1, 9), state=None) -> np.ndarray:
    """Ratios ``G/I`` along densities whose minimum is ``10**-k``.

    The density is ``10**-k`` at ``state`` (the worst state by default)
    and proportional to ``eta_beta`` elsewhere.
    """
    eta = solve_eta(land, fam, beta).rho
    ratio = _Ratio(land, fam, beta, eta)
    x0 = int(np.argmax(land.objective)) if state is None else int(state)
    out = []
    others = np.arange(land.n) != x0
    for k in exponents:
        rho = eta.copy()
        rho[x0] = 10.0 ** (-k)
        rest = 1.0 - rho[x0] * land.ell[x0]
        rho[others] *= rest / (eta[others] @ land.ell[others])
        out.append(ratio(rho))
    return np.array(out)


@dataclass
class ComparisonReport:
    """Terms of the chain ``G_* >= Lambda I_* >= bound I_*``."""

    G_star: float
    I_star: float
    Lambda: float
    lower_bound: float
    slack: float = COMPARISON_SLACK

    def _geq(self, a, b):
        return a >= b - self.slack * max(1.0, abs(a), abs(b))

    @property
    def first_holds(self) -> bool:
        return self._geq(self.G_star, self.Lambda * self.I_star)

    @property
    def second_holds(self) -> bool:
        return self._geq(self.Lambda * self.I_star, self.lower_bound * self.I_star)

    @property
    def holds(self) -> bool:
        return self.first_holds and self.second_holds


def comparison_terms(land: EnergyLandscape, fam: EntropyFamily, rho, rho_star):
    """``(G_*, I_*)`` for a reference density ``rho_star``."""
    rho = as_rho(rho)
    rho_star = as_rho(rho_star)
    f = np.asarray(fam.phi_prime(rho)) - np.asarray(fam.phi_prime(rho_star))
    th = np.asarray(fam.theta(rho[:, None], rho[None, :]))
    w = land.ell[:, None] * land.generator * th
    np.fill_diagonal(w, 0.0)
    G = 0.5 * float(np.sum(w * (f[None, :] - f[:, None]) ** 2))
    I = float(np.sum(land.ell * np.asarray(fam.bregman(rho, rho_star))))
    return G, I


def comparison_lower_bound(land: EnergyLandscape, fam: EntropyFamily, rho) -> float:
    """``lambda(L) phi''(1/ell_min) / phi''(rho_min)``."""
    lam = spectral_gap(land.generator, land.ell)
    return float(lam * fam.phi_second(1.0 / land.ell_min) / fam.phi_second(as_rho(rho).min()))


def comparison_inequality_check(land: EnergyLandscape, fam: EntropyFamily, rho, rho_star, denominator: str = "source") -> ComparisonReport:
    """Evaluate ``G_*``, ``I_*``, the comparison gap ``Lambda(rho)`` and its lower bound."""
    rho = as_rho(rho)
    K, weight = comparison_generator(land, fam, rho, rho_star, denominator)
    Lam = spectral_gap(K, weight / weight.sum())
    G, I = comparison_terms(land, fam, rho, rho_star)
    return ComparisonReport(G, I, Lam, comparison_lower_bound(land, fam, rho))


@dataclass
class DecayReport:
    """Exponential envelope ``I_t <= exp(-chi t) I_0`` along a trajectory.

    Attributes
    ----------
    chi_tilde : float
        Largest rate for which the envelope holds at every usable grid
        point; ``inf`` when ``I_0 = 0``.
    envelope_holds : bool
        Envelope with the supplied ``chi``.
    ceiling : float or None
        Spectral gap of the linearized generator, when supplied.
    """

    chi: float
    chi_tilde: float
    envelope_holds: bool
    ceiling: float | None
    used_points: int

    @property
    def positive(self) -> bool:
        return self.chi_tilde > 0

    @property
    def below_ceiling(self) -> bool | None:
        return None if self.ceiling is None else self.chi_tilde <= self.ceiling

    @property
    def below_twice_ceiling(self) -> bool | None:
        return None if self.ceiling is None else self.chi_tilde <= 2.0 * self.ceiling


def decay_certificate(traj, chi: float, ceiling: float | None = None, floor: float = 1e-12) -> DecayReport:
    """Check the exponential envelope on a homogeneous trajectory.

    Grid points with ``I_t <= floor * I_0`` sit at round-off level and are
    ignored when fitting ``chi_tilde``; the envelope with ``chi`` is checked
    at every point with a relative slack of ``1e-9``.
    """
    t = np.asarray(traj.times, dtype=float)
    I = np.asarray(traj.gap_I, dtype=float)
    I0 = I[0]
    if I0 <= 0:
        return DecayReport(chi, np.inf, bool(np.all(I <= 0)), ceiling, 0)
    envelope = np.exp(-chi * t) * I0
    holds = bool(np.all(I <= envelope * (1 + 1e-9) + floor * I0))
    use = (t > 0) & (I > floor * I0)
    if not use.any():
        return DecayReport(chi, np.inf, holds, ceiling, 0)
    rates = -np.log(I[use] / I0) / t[use]
    return DecayReport(chi, float(rates.min()), holds, ceiling, int(use.sum()))
