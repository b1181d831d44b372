"""Discrete calculus on a landscape and the penalized cost.

Edge fields are dense ``(n, n)`` arrays with a zero diagonal.  Gradients
are antisymmetric; the divergence pairs with the gradient through the
``ell``-weighted edge inner product, so ``<grad psi, Phi> = -<psi, div Phi>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .entropy import EntropyFamily
from .errors import DomainError, NotMinimizer
from .model import STRUCT_TOL, EnergyLandscape, as_rho

FOC_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EdgeField:
    """Real function on ordered pairs of states.

    Parameters
    ----------
    values : (n, n) array_like
        Entries ``F(x, y)``; the diagonal must vanish.
    form : bool
        If true the field must be antisymmetric.
    """

    values: np.ndarray
    form: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DomainError("edge field must be a square matrix")
        if np.any(np.diag(v) != 0):
            raise DomainError("edge field must vanish on the diagonal")
        if self.form:
            scale = max(np.abs(v).max(initial=0.0), 1.0)
            if np.abs(v + v.T).max(initial=0.0) > STRUCT_TOL * scale:
                raise DomainError("form must be antisymmetric")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __neg__(self) -> "EdgeField":
        return EdgeField(-self.values, self.form)

    @property
    def positive_part(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)

    @property
    def negative_part(self) -> np.ndarray:
        return negative_part(self.values)


def negative_part(a):
    """``(a)_- = max(0, -a)``."""
    return np.maximum(0.0, -np.asarray(a, dtype=float))


def _values(F) -> np.ndarray:
    return F.values if isinstance(F, EdgeField) else np.asarray(F, dtype=float)


def grad(f) -> EdgeField:
    """``grad f (x, y) = f(y) - f(x)``."""
    f = np.asarray(f, dtype=float)
    return EdgeField(f[None, :] - f[:, None], form=True)


def divergence(gen, Psi) -> np.ndarray:
    """``div Psi (x) = 1/2 sum_y gen(x,y) (Psi(x,y) - Psi(y,x))``."""
    gen = np.asarray(gen, dtype=float)
    P = _values(Psi)
    off = gen - np.diag(np.diag(gen))
    return 0.5 * (off * (P - P.T)).sum(axis=1)


def inner_l2(measure, f, g) -> float:
    """``sum_x measure(x) f(x) g(x)``."""
    return float(np.sum(np.asarray(measure) * np.asarray(f) * np.asarray(g)))


def _edge_weights(land: EnergyLandscape) -> np.ndarray:
    w = land.ell[:, None] * land.generator
    np.fill_diagonal(w, 0.0)
    return w


def inner_edge(land: EnergyLandscape, F, G) -> float:
    """``1/2 sum_{x != y} ell(x) L(x,y) F(x,y) G(x,y)``."""
    return float(0.5 * np.sum(_edge_weights(land) * _values(F) * _values(G)))


def mobility_matrix(fam: EntropyFamily, rho) -> np.ndarray:
    """``theta(rho(x), rho(y))`` for every pair."""
    rho = as_rho(rho)
    return np.asarray(fam.theta(rho[:, None], rho[None, :]))


def inner_rho(land: EnergyLandscape, fam: EntropyFamily, rho, F, G) -> float:
    """Density-weighted edge product with weights ``ell(x) L(x,y) theta``."""
    w = _edge_weights(land) * mobility_matrix(fam, rho)
    return float(0.5 * np.sum(w * _values(F) * _values(G)))


def entropy(land: EnergyLandscape, fam: EntropyFamily, rho) -> float:
    """``H(rho) = sum_x phi(rho(x)) ell(x)``."""
    return float(np.sum(np.asarray(fam.phi(as_rho(rho))) * land.ell))


def cost(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho) -> float:
    """Penalized cost ``beta sum U rho ell + sum phi(rho) ell``."""
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    rho = as_rho(rho)
    return float(beta * np.sum(land.objective * rho * land.ell) + entropy(land, fam, rho))


def first_order_residual(land: EnergyLandscape, fam: EntropyFamily, beta: float, eta) -> float:
    """Spread of ``beta U + phi'(eta)`` across states (zero at the minimizer)."""
    v = beta * land.objective + np.asarray(fam.phi_prime(as_rho(eta)))
    return float(v.max() - v.min())


def gap_I(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho, eta, form: str = "bregman") -> float:
    """Excess cost ``U_beta(rho) - U_beta(eta)`` over the minimizer ``eta``.

    Parameters
    ----------
    form : {"bregman", "difference"}
        The default sums pointwise Bregman divergences, which stays
        accurate near convergence; ``"difference"`` subtracts two costs.

    Raises
    ------
    NotMinimizer
        If ``eta`` violates the first-order condition by more than 1e-8 or
        is not normalized.
    """
    rho = as_rho(rho)
    eta = as_rho(eta)
    if first_order_residual(land, fam, beta, eta) > FOC_TOL or abs(eta @ land.ell - 1.0) > FOC_TOL:
        raise NotMinimizer("eta does not minimize the penalized cost at this beta")
    if form == "difference":
        return cost(land, fam, beta, rho) - cost(land, fam, beta, eta)
    if form != "bregman":
        raise DomainError(f"unknown form {form!r}")
    return float(np.sum(land.ell * np.asarray(fam.bregman(rho, eta))))


def gap_G(land: EnergyLandscape, fam: EntropyFamily, beta: float, rho) -> float:
    """Dissipation ``1/2 sum ell L theta (grad[beta U + phi'(rho)])**2``."""
    rho = as_rho(rho)
    F = grad(beta * land.objective + np.asarray(fam.phi_prime(rho)))
    return inner_rho(land, fam, rho, F, F)


def functional_gradient(kind: str, rho, *, potential=None, fam: EntropyFamily | None = None) -> EdgeField:
    """Gradient of a linear or entropy functional as an exact form.

    Parameters
    ----------
    kind : {"potential", "entropy"}
        ``"potential"``: ``V(rho) = sum R rho ell`` with ``R = potential``;
        ``"entropy"``: ``V(rho) = sum f(rho) ell`` with ``f = fam.phi``.
    """
    if kind == "potential":
        if potential is None:
            raise DomainError("potential kind needs a potential vector")
        return grad(potential)
    if kind == "entropy":
        if fam is None:
            raise DomainError("entropy kind needs an entropy family")
        return grad(fam.phi_prime(as_rho(rho)))
    raise DomainError(f"unknown kind {kind!r}")
