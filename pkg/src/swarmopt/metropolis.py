"""Metropolis flow as a gradient descent in a law-dependent Markov geometry.

Each positive law ``mu`` gets a generator ``K_mu`` reversible for ``mu``;
the gradient of ``H(mu) = sum phi(mu/pi) pi`` in that geometry is the exact
form ``d[phi'(mu/pi)]``, and descending along it reproduces the linear
Metropolis evolution ``mu' = mu L_pi`` for every convex ``phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .entropy import BOLTZMANN, EntropyFamily
from .errors import DomainError
from .flow import Controls, rkf45
from .functionals import EdgeField, grad
from .model import EnergyLandscape, check_measure, detailed_balance_residual, random_landscape, spectral_gap

VECTOR_FIELD_TOL = 1e-10
PATH_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class MetropolisSetup:
    """Base chain, target law and entropy.

    Attributes
    ----------
    land : EnergyLandscape
        Supplies the base generator ``L`` and its reversible law ``ell``.
    target : (n,) ndarray
        Positive probability ``pi``.
    fam : EntropyFamily
        Any variant.
    """

    land: EnergyLandscape
    target: np.ndarray
    fam: EntropyFamily = field(default_factory=lambda: EntropyFamily(variant=BOLTZMANN))

    def __post_init__(self):
        pi = check_measure(self.target, "target")
        if pi.size != self.land.n:
            raise DomainError("target has the wrong length")
        pi = pi.copy()
        pi.setflags(write=False)
        object.__setattr__(self, "target", pi)

    @classmethod
    def gibbs(cls, land: EnergyLandscape, beta: float, fam: EntropyFamily | None = None) -> "MetropolisSetup":
        """Target ``pi proportional to ell exp(-beta U)``."""
        w = land.ell * np.exp(-beta * (land.objective - land.objective.min()))
        kw = {} if fam is None else {"fam": fam}
        return cls(land, w / w.sum(), **kw)


def _diagonalize(off):
    off = np.array(off, dtype=float)
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


def _positive_law(mu, n):
    mu = check_measure(mu, "mu")
    if mu.size != n:
        raise DomainError("mu has the wrong length")
    return mu


def metropolis_generator(setup: MetropolisSetup) -> np.ndarray:
    """``L(x,y) min(1, pi(y) ell(x) / (pi(x) ell(y)))`` off the diagonal; reversible for ``pi``."""
    land = setup.land
    w = setup.target / land.ell
    accept = np.minimum(1.0, w[None, :] / w[:, None])
    return _diagonalize(land.generator * accept)


def _ratio(setup, mu):
    return mu / setup.target


def markov_riemann_map(setup: MetropolisSetup, fam: EntropyFamily | None, mu) -> np.ndarray:
    """Generator ``K_mu`` reversible for ``mu``.

    ``K_mu(x,y) = ell(x)/mu(x) L(x,y) min(pi/ell(x), pi/ell(y)) theta(mu/pi(x), mu/pi(y))``
    with ``fam = setup.fam`` when ``None``.
    """
    fam = setup.fam if fam is None else fam
    land = setup.land
    mu = _positive_law(mu, land.n)
    w = setup.target / land.ell
    r = _ratio(setup, mu)
    th = np.asarray(fam.theta(r[:, None], r[None, :]))
    off = (land.ell / mu)[:, None] * land.generator * np.minimum(w[:, None], w[None, :]) * th
    return _diagonalize(off)


def law_generator(K, F) -> np.ndarray:
    """``K_{mu,F}``: off-diagonal ``K(x,y) F_+(x,y)`` with zero row sums."""
    Fv = F.values if isinstance(F, EdgeField) else np.asarray(F, dtype=float)
    return _diagonalize(np.asarray(K) * np.maximum(Fv, 0.0))


def form_inner(mu, K, F1, F2) -> float:
    """``1/2 sum mu(x) K(x,y) F1(x,y) F2(x,y)`` over ordered pairs."""
    K = np.array(K, dtype=float)
    np.fill_diagonal(K, 0.0)
    a = F1.values if isinstance(F1, EdgeField) else np.asarray(F1)
    b = F2.values if isinstance(F2, EdgeField) else np.asarray(F2)
    return 0.5 * float(np.sum(np.asarray(mu)[:, None] * K * a * b))


def divergence_mu(K, F) -> np.ndarray:
    """``sum_y K(x,y) F(x,y)``, the adjoint of ``-d`` for the law-weighted products."""
    K = np.array(K, dtype=float)
    np.fill_diagonal(K, 0.0)
    Fv = F.values if isinstance(F, EdgeField) else np.asarray(F)
    return (K * Fv).sum(axis=1)


def entropy_H(setup: MetropolisSetup, fam: EntropyFamily | None, mu) -> float:
    """``sum phi(mu/pi) pi``."""
    fam = setup.fam if fam is None else fam
    mu = _positive_law(mu, setup.land.n)
    return float(np.sum(np.asarray(fam.phi(_ratio(setup, mu))) * setup.target))


def functional_gradient_K(setup: MetropolisSetup, fam: EntropyFamily | None, mu) -> EdgeField:
    """The exact form ``d[phi'(mu/pi)]``."""
    fam = setup.fam if fam is None else fam
    mu = _positive_law(mu, setup.land.n)
    return grad(np.asarray(fam.phi_prime(_ratio(setup, mu))))


def descent_field(setup: MetropolisSetup, fam: EntropyFamily | None, mu) -> np.ndarray:
    """``mu K_{mu, -grad H(mu)}``, the gradient-descent velocity."""
    K = markov_riemann_map(setup, fam, mu)
    G = law_generator(K, -functional_gradient_K(setup, fam, mu))
    return np.asarray(mu) @ G


def metropolis_field(setup: MetropolisSetup, mu) -> np.ndarray:
    """``mu L_pi``."""
    return np.asarray(mu) @ metropolis_generator(setup)


def directional_derivative_fd(setup: MetropolisSetup, fam: EntropyFamily | None, mu, F, h: float = 1e-6) -> float:
    """Central difference of ``H`` along ``mu' = mu K_{mu,F}``."""
    K = markov_riemann_map(setup, fam, mu)
    v = np.asarray(mu) @ law_generator(K, F)
    return (entropy_H(setup, fam, mu + h * v) - entropy_H(setup, fam, mu - h * v)) / (2 * h)


@dataclass
class MetropolisReport:
    """Largest gap between the descent and Metropolis velocities.

    Attributes
    ----------
    max_residual : float
        Over all trials and indicator test functions.
    per_family : dict
        Maximum residual per entropy label.
    """

    trials: int
    max_residual: float
    per_family: dict
    tol: float = VECTOR_FIELD_TOL

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def family_label(fam: EntropyFamily) -> str:
    return fam.variant if fam.variant == BOLTZMANN else f"{fam.variant}(m={fam.m:g})"


def standard_families() -> list:
    """The relative entropy and the spliced family at ``m = -0.5, -1, -2``."""
    return [EntropyFamily(variant=BOLTZMANN)] + [EntropyFamily(m) for m in (-0.5, -1.0, -2.0)]


def verify_descent_identity(setup: MetropolisSetup, fam: EntropyFamily | None = None, trials: int = 100, seed: int = 0) -> MetropolisReport:
    """Compare ``mu K_{mu,-grad H}`` with ``mu L_pi`` at random interior laws.

    Evaluating a row vector on the indicator basis gives its entries, so
    the residual is the sup norm of the difference of the two velocities.
    """
    if trials < 1:
        raise DomainError("trials must be at least 1")
    fam = setup.fam if fam is None else fam
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        mu = rng.dirichlet(np.ones(setup.land.n))
        mu = np.clip(mu, 1e-6, None)
        mu /= mu.sum()
        worst = max(worst, float(np.abs(descent_field(setup, fam, mu) - metropolis_field(setup, mu)).max()))
    return MetropolisReport(trials, worst, {family_label(fam): worst})


def random_setup(rng: np.random.Generator, n: int, fam: EntropyFamily) -> MetropolisSetup:
    land = random_landscape(rng, n)
    pi = rng.dirichlet(np.full(n, 2.0))
    pi = np.clip(pi, 1e-3, None)
    return MetropolisSetup(land, pi / pi.sum(), fam)


def metropolis_suite(trials: int = 1000, seed: int = 0, families=None, sizes=range(3, 9)) -> MetropolisReport:
    """Random ``(L, pi, mu)`` draws cycling through ``families`` and state counts."""
    families = standard_families() if families is None else list(families)
    sizes = list(sizes)
    rng = np.random.default_rng(seed)
    per = {family_label(f): 0.0 for f in families}
    for k in range(trials):
        fam = families[k % len(families)]
        n = sizes[(k // len(families)) % len(sizes)]
        setup = random_setup(rng, n, fam)
        mu = np.clip(rng.dirichlet(np.ones(n)), 1e-6, None)
        mu /= mu.sum()
        r = float(np.abs(descent_field(setup, fam, mu) - metropolis_field(setup, mu)).max())
        lab = family_label(fam)
        per[lab] = max(per[lab], r)
    return MetropolisReport(trials, max(per.values()), per)


@dataclass
class PathwiseReport:
    """Sup distances between integrated descent, integrated Metropolis and ``mu0 exp(t L_pi)``."""

    horizon: float
    descent_vs_linear: float
    descent_vs_exact: float
    tol: float = PATH_TOL

    @property
    def passed(self) -> bool:
        return max(self.descent_vs_linear, self.descent_vs_exact) <= self.tol


def pathwise_check(setup: MetropolisSetup, fam: EntropyFamily | None, mu0, horizon: float | None = None, points: int = 21, controls: Controls = Controls(rtol=1e-11, atol=1e-14)) -> PathwiseReport:
    """Integrate the descent flow and the Metropolis flow on ``[0, 10/lambda(L_pi)]``.

    Both use the adaptive Runge-Kutta integrator; the exact linear solution
    ``mu0 exp(t L_pi)`` is a third, integrator-free reference.
    """
    Lpi = metropolis_generator(setup)
    if horizon is None:
        horizon = 10.0 / spectral_gap(Lpi, setup.target)
    mu0 = _positive_law(mu0, setup.land.n)
    times = np.linspace(0.0, horizon, points)
    ones = np.ones(mu0.size)
    Yd, _ = rkf45(lambda t, y: descent_field(setup, fam, y), mu0, times, controls, weights=ones)
    Yl, _ = rkf45(lambda t, y: y @ Lpi, mu0, times, controls, weights=ones)
    exact = np.array([mu0 @ expm(t * Lpi) for t in times])
    return PathwiseReport(float(horizon), float(np.abs(Yd - Yl).max()), float(np.abs(Yd - exact).max()))


def reversibility_residual(setup: MetropolisSetup, fam: EntropyFamily | None, mu) -> float:
    """Relative detailed-balance residual of ``K_mu`` for ``mu``."""
    return detailed_balance_residual(markov_riemann_map(setup, fam, mu), mu)


def metropolis_reversibility(setup: MetropolisSetup) -> float:
    return detailed_balance_residual(metropolis_generator(setup), setup.target)

