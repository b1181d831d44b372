"""Markov generators whose time marginals follow the density flow.

For a density ``rho`` with law ``mu = rho * ell``, both the first-kind
generator (jumps only down the potential ``beta U + phi'(rho)``) and the
second-kind generator (base chain plus downhill boosts) satisfy
``mu G = ell * F(rho)``, where ``F`` is the flow right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import EntropyFamily
from .errors import DomainError
from .functionals import mobility_matrix, negative_part
from .model import STRUCT_TOL, EnergyLandscape, as_rho, minimizer_set

FIRST = "first"
SECOND = "second"
HYBRID = "hybrid"


def _with_diagonal(off: np.ndarray) -> np.ndarray:
    off = np.array(off, dtype=float)
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


@dataclass(frozen=True, eq=False)
class NonlinearGenerator:
    """Generator evaluated at one density.

    Attributes
    ----------
    matrix : (n, n) ndarray
        Nonnegative off-diagonal rates, rows summing to zero.
    kind : str
        ``"first"``, ``"second"`` or ``"hybrid"``.
    a : float
        Weight of the second kind in a hybrid.
    """

    matrix: np.ndarray
    kind: str
    a: float = 0.0

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        off = M - np.diag(np.diag(M))
        if np.any(off < 0):
            raise DomainError("generator has a negative off-diagonal rate")
        scale = max(1.0, np.abs(M).max())
        if np.abs(M.sum(axis=1)).max() > STRUCT_TOL * scale:
            raise DomainError("generator rows do not sum to zero")
        M = M.copy()
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.matrix)


def _base(land):
    off = np.array(land.generator, dtype=float)
    np.fill_diagonal(off, 0.0)
    return off


def first_rates(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho) -> np.ndarray:
    """Off-diagonal first-kind rates.

    ``L(x,y) (theta/rho(x) beta (U(y) - U(x)) + rho(y)/rho(x) - 1)_-``
    """
    rho = as_rho(rho)
    th = mobility_matrix(fam, rho)
    U = land.objective
    arg = th / rho[:, None] * beta * (U[None, :] - U[:, None]) + rho[None, :] / rho[:, None] - 1.0
    out = _base(land) * negative_part(arg)
    np.fill_diagonal(out, 0.0)
    return out


def second_rates(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho) -> np.ndarray:
    """Off-diagonal second-kind rates ``L(x,y) (1 + theta/rho(x) beta (U(y) - U(x))_-)``."""
    rho = as_rho(rho)
    th = mobility_matrix(fam, rho)
    U = land.objective
    boost = th / rho[:, None] * beta * negative_part(U[None, :] - U[:, None])
    out = _base(land) * (1.0 + boost)
    np.fill_diagonal(out, 0.0)
    return out


def first_generator(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho) -> NonlinearGenerator:
    """Generator that moves mass only down ``beta U + phi'(rho)``; zero at the minimizer."""
    return NonlinearGenerator(_with_diagonal(first_rates(land, fam, beta, rho)), FIRST)


def second_generator(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho) -> NonlinearGenerator:
    """Base generator plus downhill boosts; irreducible and dominates ``L``."""
    return NonlinearGenerator(_with_diagonal(second_rates(land, fam, beta, rho)), SECOND)


def hybrid_generator(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho, a: float) -> NonlinearGenerator:
    """``(1 - a) first + a second``.

    Raises
    ------
    DomainError
        If ``a`` is outside ``[0, 1]``.
    """
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"hybrid weight must lie in [0, 1], got {a}")
    off = (1.0 - a) * first_rates(land, fam, beta, rho) + a * second_rates(land, fam, beta, rho)
    return NonlinearGenerator(_with_diagonal(off), HYBRID, float(a))


def build_generator(land, fam, beta, rho, kind: str, a: float = 0.5) -> NonlinearGenerator:
    if kind == FIRST:
        return first_generator(land, fam, beta, rho)
    if kind == SECOND:
        return second_generator(land, fam, beta, rho)
    if kind == HYBRID:
        return hybrid_generator(land, fam, beta, rho, a)
    raise DomainError(f"unknown generator kind {kind!r}")


def representation_residual(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho, kinds=(FIRST, SECOND, HYBRID), a: float = 0.5) -> dict:
    """Largest gap between ``mu[G 1_z]`` and ``ell(z) F(rho)(z)`` over states ``z``.

    Returns
    -------
    dict
        Residual per generator kind.
    """
    from .flow import rhs

    rho = as_rho(rho)
    lhs = land.ell * rhs(land, fam, beta, rho)
    mu = rho * land.ell
    out = {}
    for kind in kinds:
        G = build_generator(land, fam, beta, rho, kind, a).matrix
        # mu[G f] for f = indicator of z is (mu G)(z)
        out[kind] = float(np.abs(mu @ G - lhs).max())
    return out


def linearized_generator(land: EnergyLandscape, fam: EntropyFamily, beta: float, eta=None):
    """Generator ``phi''(eta(x)) L(x,y) theta(eta(x), eta(y))`` and its reversible law.

    Returns
    -------
    Q : (n, n) ndarray
    ell_beta : (n,) ndarray
        Probability proportional to ``ell / phi''(eta)``.
    """
    if eta is None:
        from .stationary import solve_eta

        eta = solve_eta(land, fam, beta).rho
    eta = as_rho(eta)
    d2 = np.asarray(fam.phi_second(eta))
    off = d2[:, None] * _base(land) * mobility_matrix(fam, eta)
    w = land.ell / d2
    return _with_diagonal(off), w / w.sum()


def comparison_generator(land: EnergyLandscape, fam: EntropyFamily, rho, rho_star, denominator: str = "source"):
    """Generator ``L(x,y) theta(rho(x), rho(y)) / theta(rho(x), rho_star(x))``.

    Parameters
    ----------
    denominator : {"source", "target"}
        ``"source"`` divides by ``theta(rho(x), rho_star(x))``, which makes
        ``ell * theta(rho, rho_star)`` reversible.  ``"target"`` divides by
        ``theta(rho(x), rho_star(y))`` for comparison only; it is generally
        not reversible for that weight.

    Returns
    -------
    K : (n, n) ndarray
    weight : (n,) ndarray
        ``ell(x) theta(rho(x), rho_star(x))``, not normalized.
    """
    rho = as_rho(rho)
    rho_star = as_rho(rho_star)
    th = mobility_matrix(fam, rho)
    if denominator == "source":
        den = np.asarray(fam.theta(rho, rho_star))[:, None]
    elif denominator == "target":
        den = np.asarray(fam.theta(rho[:, None], rho_star[None, :]))
    else:
        raise DomainError(f"unknown denominator {denominator!r}")
    off = _base(land) * th / den
    weight = land.ell * np.asarray(fam.theta(rho, rho_star))
    return _with_diagonal(off), weight


# classes of edges as beta grows along the flow
DOWNHILL_TO_NONMIN = "downhill_to_nonminimizer"
INTO_MINIMUM = "into_minimum"
OUT_OF_MINIMUM = "out_of_minimum"
OTHER = "not_covered"
INFINITE = "+inf"
ZERO = "0"
INDETERMINATE = "indeterminate"
UNSTATED = "unstated"


@dataclass(frozen=True)
class EdgeLimit:
    """Predicted large-time behavior of one edge of both generators."""

    x: int
    y: int
    case: str
    second_limit: object
    first_limit: str
    second_now: float
    first_now: float


def large_time_limits(land: EnergyLandscape, fam: EntropyFamily, schedule, t: float, rho) -> list:
    """Classify every edge by the large-time limit of its rates.

    With ``a(z) = U(z) - min U``:

    * ``min U < U(y) <= U(x)``: second kind tends to
      ``L(x,y) (a(y)/a(x))**(1/(m-1))``, first kind to 0.
    * ``U(x) > U(y) = min U``: second kind grows without bound (tag
      ``"+inf"``); the first kind is indeterminate.
    * ``U(x) = min U < U(y)``: second kind tends to ``L(x,y)``, first kind to 0.
    * any other edge: second kind equals ``L(x,y)`` (no downhill boost);
      the first-kind limit is not stated.
    """
    rho = as_rho(rho)
    beta = float(schedule.beta(t))
    F = first_rates(land, fam, beta, rho)
    S = second_rates(land, fam, beta, rho)
    U = land.objective
    umin = U.min()
    in_min = np.zeros(land.n, dtype=bool)
    in_min[minimizer_set(land)] = True
    m = fam.m
    out = []
    src, dst = land.edges
    for x, y in zip(src.tolist(), dst.tolist()):
        rate = land.generator[x, y]
        if not in_min[y] and U[y] <= U[x]:
            case = DOWNHILL_TO_NONMIN
            s_lim = rate * ((U[y] - umin) / (U[x] - umin)) ** (1.0 / (m - 1.0))
            f_lim = ZERO
        elif in_min[y] and not in_min[x]:
            case, s_lim, f_lim = INTO_MINIMUM, INFINITE, INDETERMINATE
        elif in_min[x] and not in_min[y]:
            case, s_lim, f_lim = OUT_OF_MINIMUM, float(rate), ZERO
        else:
            case, s_lim, f_lim = OTHER, float(rate), UNSTATED
        out.append(EdgeLimit(x, y, case, s_lim, f_lim, float(S[x, y]), float(F[x, y])))
    return out
