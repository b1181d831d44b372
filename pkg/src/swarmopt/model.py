"""Finite state spaces with a reversible generator and an objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import BadMeasure, DomainError, NotIrreducible, NotReversible

STRUCT_TOL = 1e-12
MASS_TOL = 1e-10


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def check_measure(ell, name: str = "ell") -> np.ndarray:
    """Validate a positive probability vector and return it as an array."""
    ell = np.asarray(ell, dtype=float)
    if ell.ndim != 1 or ell.size == 0:
        raise BadMeasure(f"{name} must be a nonempty vector")
    if not np.all(np.isfinite(ell)) or np.any(ell <= 0):
        raise BadMeasure(f"{name} must be strictly positive")
    if abs(ell.sum() - 1.0) > STRUCT_TOL * ell.size:
        raise BadMeasure(f"{name} must sum to 1, sums to {ell.sum():.17g}")
    return ell


def detailed_balance_residual(gen, measure) -> float:
    """Largest relative violation of ``measure[x] gen[x,y] = measure[y] gen[y,x]``."""
    flux = np.asarray(measure)[:, None] * np.asarray(gen)
    off = ~np.eye(flux.shape[0], dtype=bool)
    scale = max(np.abs(flux[off]).max(initial=0.0), np.finfo(float).tiny)
    return float(np.abs(flux - flux.T)[off].max(initial=0.0) / scale)


@dataclass(frozen=True, eq=False)
class EnergyLandscape:
    """Reversible generator, its reversible measure and an objective.

    Use :func:`build_landscape` or :meth:`from_matrix` rather than the raw
    constructor; those validate the invariants.

    Attributes
    ----------
    generator : (n, n) ndarray
        Off-diagonal rates, rows summing to zero.
    ell : (n,) ndarray
        Reversible probability measure.
    objective : (n,) ndarray
        Function to minimize.
    """

    generator: np.ndarray
    ell: np.ndarray
    objective: np.ndarray
    labels: tuple = field(default=())

    @classmethod
    def from_matrix(cls, gen, ell, U, labels=()) -> "EnergyLandscape":
        """Validate a dense rate matrix; the diagonal is recomputed."""
        gen = np.array(gen, dtype=float)
        n = gen.shape[0]
        if gen.shape != (n, n) or n < 2:
            raise DomainError("generator must be a square matrix with n >= 2")
        np.fill_diagonal(gen, 0.0)
        if np.any(gen < 0) or not np.all(np.isfinite(gen)):
            raise DomainError("off-diagonal rates must be finite and nonnegative")
        np.fill_diagonal(gen, -gen.sum(axis=1))
        ell = check_measure(ell)
        U = np.asarray(U, dtype=float)
        if ell.shape != (n,) or U.shape != (n,):
            raise DomainError("ell and U must have one entry per state")
        if not np.all(np.isfinite(U)):
            raise DomainError("objective must be finite")
        if detailed_balance_residual(gen, ell) > STRUCT_TOL:
            raise NotReversible("ell is not reversible for the generator")
        ncomp, _ = connected_components(gen > 0, directed=True, connection="strong")
        if ncomp != 1:
            raise NotIrreducible(f"rate graph has {ncomp} strongly connected components")
        return cls(_readonly(gen), _readonly(ell), _readonly(U), tuple(labels))

    @property
    def n(self) -> int:
        return self.ell.size

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Source and target indices of the positive off-diagonal rates."""
        off = self.generator.copy()
        np.fill_diagonal(off, 0.0)
        src, dst = np.nonzero(off > 0)
        return src, dst

    @property
    def ell_min(self) -> float:
        return float(self.ell.min())

    @property
    def sup_rate(self) -> float:
        """``max_x |L(x, x)|``."""
        return float(np.abs(np.diag(self.generator)).max())

    def with_objective(self, U) -> "EnergyLandscape":
        return EnergyLandscape.from_matrix(self.generator, self.ell, U, self.labels)


def build_landscape(edges, ell, U, labels=()) -> EnergyLandscape:
    """Assemble a landscape from ``(x, y, rate)`` triples.

    Repeated pairs accumulate.  The diagonal is filled so rows sum to zero.

    Raises
    ------
    NotIrreducible, NotReversible, BadMeasure
    """
    ell = check_measure(ell)
    n = ell.size
    gen = np.zeros((n, n))
    for x, y, rate in edges:
        x, y = int(x), int(y)
        if not (0 <= x < n and 0 <= y < n):
            raise DomainError(f"edge ({x}, {y}) outside 0..{n - 1}")
        if rate < 0:
            raise DomainError(f"negative rate on edge ({x}, {y})")
        if x != y:
            gen[x, y] += rate
    return EnergyLandscape.from_matrix(gen, ell, U, labels)


@dataclass(frozen=True, eq=False)
class Density:
    """Positive density with respect to ``ell``, normalized to unit mass."""

    rho: np.ndarray
    ell: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        ell = np.asarray(self.ell, dtype=float)
        if rho.shape != ell.shape:
            raise DomainError("density and measure shapes differ")
        if not np.all(rho > 0):
            raise DomainError("density must be strictly positive")
        mass = float(rho @ ell)
        if abs(mass - 1.0) > MASS_TOL:
            raise DomainError(f"density has mass {mass:.17g}, expected 1")
        if np.any(rho * ell > 1.0 + MASS_TOL):
            raise DomainError("density exceeds 1/ell somewhere")
        object.__setattr__(self, "rho", _readonly(rho))
        object.__setattr__(self, "ell", _readonly(ell))

    @classmethod
    def from_measure(cls, mu, ell) -> "Density":
        return cls(np.asarray(mu, dtype=float) / np.asarray(ell, dtype=float), ell)

    @property
    def mu(self) -> np.ndarray:
        return self.rho * self.ell

    @property
    def inf(self) -> float:
        return float(self.rho.min())

    @property
    def sup(self) -> float:
        return float(self.rho.max())


def as_rho(rho) -> np.ndarray:
    """Accept a :class:`Density` or a bare array."""
    return rho.rho if isinstance(rho, Density) else np.asarray(rho, dtype=float)


def minimizer_set(land: EnergyLandscape, tol: float = 0.0) -> np.ndarray:
    """Sorted indices with ``U(x) <= min U + tol``."""
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    U = land.objective
    return np.flatnonzero(U <= U.min() + tol)


def osc(U) -> float:
    """``max U - min U``."""
    U = np.asarray(U, dtype=float)
    return float(U.max() - U.min())


def spectral_gap(gen, measure) -> float:
    """Smallest nonzero eigenvalue of ``-gen`` for a reversible pair.

    Computed from the symmetric matrix ``D^{1/2} (-gen) D^{-1/2}`` with
    ``D = diag(measure)``.  The measure need not be normalized.

    Raises
    ------
    NotReversible
        If detailed balance fails beyond 1e-12 relative.
    """
    gen = np.asarray(gen, dtype=float)
    measure = np.asarray(measure, dtype=float)
    if detailed_balance_residual(gen, measure) > STRUCT_TOL:
        raise NotReversible("measure is not reversible for the generator")
    sq = np.sqrt(measure)
    sym = -(sq[:, None] * gen / sq[None, :])
    sym = 0.5 * (sym + sym.T)
    vals = np.linalg.eigvalsh(sym)
    return float(vals[1])


def spectral_gap_vector(gen, measure) -> tuple[float, np.ndarray]:
    """Spectral gap and its eigenfunction ``f`` (``-gen f = gap f``)."""
    gen = np.asarray(gen, dtype=float)
    measure = np.asarray(measure, dtype=float)
    sq = np.sqrt(measure)
    sym = -(sq[:, None] * gen / sq[None, :])
    vals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
    return float(vals[1]), vecs[:, 1] / sq


def ring_objective(n: int = 20) -> np.ndarray:
    """``u(-0.6 + i/5.5)`` with ``u(x) = x**2/10 + 2 (cos 3x + sin 7x)``."""
    x = -0.6 + np.arange(n) / 5.5
    return x**2 / 10.0 + 2.0 * (np.cos(3.0 * x) + np.sin(7.0 * x))


def ring20() -> EnergyLandscape:
    """Twenty-state cycle with unit rates, uniform measure and a rugged objective."""
    n = 20
    edges = [(i, (i + 1) % n, 1.0) for i in range(n)] + [(i, (i - 1) % n, 1.0) for i in range(n)]
    return build_landscape(edges, np.full(n, 1.0 / n), ring_objective(n))


def random_landscape(rng: np.random.Generator, n: int, density: float = 0.5) -> EnergyLandscape:
    """Random reversible landscape on ``n`` states.

    A random spanning path guarantees irreducibility; extra edges appear
    with probability ``density``.  Rates are ``w(x,y) / ell(x)`` for a
    symmetric conductance ``w``, which makes ``ell`` reversible.
    """
    ell = rng.dirichlet(np.full(n, 2.0))
    ell = np.maximum(ell, 1e-3)
    ell /= ell.sum()
    w = np.zeros((n, n))
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):
        w[a, b] = w[b, a] = rng.uniform(0.2, 1.0)
    extra = np.triu(rng.random((n, n)) < density, 1)
    cond = rng.uniform(0.2, 1.0, (n, n))
    w = np.where(extra & (w == 0), cond, w)
    w = np.triu(w, 1)
    w = w + w.T
    gen = w * (ell.min() / ell[:, None])
    U = rng.normal(size=n)
    return EnergyLandscape.from_matrix(gen, ell, U)


def random_density(rng: np.random.Generator, ell, concentration: float = 1.0) -> Density:
    """Dirichlet-distributed interior density."""
    ell = np.asarray(ell)
    mu = rng.dirichlet(np.full(ell.size, concentration))
    mu = np.maximum(mu, 1e-6)
    mu /= mu.sum()
    return Density.from_measure(mu, ell)
