"""Convex entropy functions, their derivatives and the mobility ``theta``.

The main family splices a power law below 1 onto a quadratic above 1::

    phi(r) = (r**m - 1 - m*(r - 1)) / (m*(m - 1))   for 0 < r < 1
    phi(r) = (r - 1)**2 / 2                         for r >= 1

with ``m < 0``.  Three reference functions are available for the
Metropolis cross-checks: the pure power law, ``-log r + r - 1`` and
``r log r - r + 1``.

All functions accept scalars or arrays and broadcast like numpy ufuncs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, NonFinite

SPLICED = "spliced"
POWER = "power"
LOG = "log"
BOLTZMANN = "boltzmann"
VARIANTS = (SPLICED, POWER, LOG, BOLTZMANN)

DIAGONAL_RTOL = 1e-9


def kappa(m: float) -> float:
    """Largest admissible annealing exponent ``-m / (2 (1 - m))``.

    Raises
    ------
    DomainError
        If ``m >= 0``.
    """
    if not m < 0:
        raise DomainError(f"kappa needs m < 0, got {m}")
    return -m / (2.0 * (1.0 - m))


def _log_ratio(t, s):
    """``log(t / s)``: ``log1p`` near 1, where it is exact, and ``log`` elsewhere.

    ``(t - s) / s`` rounds to ``-1`` once ``t / s`` drops below machine
    epsilon, so ``log1p`` alone would return ``-inf`` there.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (t - s) / s
        return np.where(np.abs(q) < 0.5, np.log1p(q), np.log(t / s))


def _scalar_or_array(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


@dataclass(frozen=True)
class EntropyFamily:
    """A convex function with ``phi(1) = phi'(1) = 0``.

    Parameters
    ----------
    m : float
        Exponent of the power-law part.  Must be negative for the spliced
        variant; any value other than 0 and 1 for the pure power law.
        Ignored by the ``log`` and ``boltzmann`` variants.
    variant : str
        One of ``"spliced"`` (default), ``"power"``, ``"log"``,
        ``"boltzmann"``.
    """

    m: float = -1.0
    variant: str = SPLICED

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}")
        if self.variant == SPLICED and not self.m < 0:
            raise DomainError(f"spliced family needs m < 0, got {self.m}")
        if self.variant == POWER and self.m in (0.0, 1.0):
            raise DomainError("power variant needs m not in {0, 1}; use log or boltzmann")

    @property
    def is_main(self) -> bool:
        return self.variant == SPLICED

    def require_main(self) -> None:
        if not self.is_main:
            raise DomainError(f"operation needs the spliced family, got {self.variant!r}")

    @property
    def kappa(self) -> float:
        self.require_main()
        return kappa(self.m)

    # ------------------------------------------------------------------
    # pointwise functions

    @staticmethod
    def _check(r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(np.isnan(r)):
            raise DomainError("argument must be nonnegative")
        return r

    def _power_phi(self, r):
        m = self.m
        # r**m - 1 - m (r - 1) written to avoid cancellation near r = 1
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            logr = np.log(r)
            val = (np.expm1(m * logr) - m * (r - 1.0)) / (m * (m - 1.0))
        return np.where(r == 0, np.inf if m < 0 else 1.0 / m, val)

    def phi(self, r):
        """Evaluate ``phi``; returns ``+inf`` at 0 where the function blows up.

        Raises
        ------
        DomainError
            For negative input.
        """
        r = self._check(r)
        v = self.variant
        with np.errstate(divide="ignore", invalid="ignore"):
            if v == SPLICED:
                out = np.where(r >= 1.0, 0.5 * (r - 1.0) ** 2, self._power_phi(np.minimum(r, 1.0)))
            elif v == POWER:
                out = self._power_phi(r)
            elif v == LOG:
                out = np.where(r == 0, np.inf, -np.log(r) + r - 1.0)
            else:
                out = np.where(r == 0, 1.0, r * np.log(np.where(r == 0, 1.0, r)) - r + 1.0)
        return _scalar_or_array(out)

    def phi_prime(self, r):
        """First derivative; ``-inf`` at 0 for the singular variants."""
        r = self._check(r)
        v = self.variant
        k = self.m - 1.0
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if v in (SPLICED, POWER):
                low = np.expm1(k * np.log(r)) / k
                low = np.where(r == 0, -np.inf if k < 0 else -1.0 / k, low)
                out = np.where(r >= 1.0, r - 1.0, low) if v == SPLICED else low
            elif v == LOG:
                out = np.where(r == 0, -np.inf, 1.0 - 1.0 / r)
            else:
                out = np.log(r)
        return _scalar_or_array(out)

    def phi_second(self, r):
        """Second derivative; ``+inf`` at 0 for the singular variants."""
        r = self._check(r)
        v = self.variant
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if v == SPLICED:
                out = np.where(r >= 1.0, 1.0, np.minimum(r, 1.0) ** (self.m - 2.0))
            elif v == POWER:
                out = r ** (self.m - 2.0)
            elif v == LOG:
                out = 1.0 / r**2
            else:
                out = 1.0 / r
        return _scalar_or_array(out)

    def g_inverse(self, y):
        """Inverse of ``phi'`` for the spliced family, total on the real line."""
        self.require_main()
        y = np.asarray(y, dtype=float)
        k = self.m - 1.0
        with np.errstate(over="ignore", invalid="ignore"):
            low = np.exp(np.log1p(k * np.minimum(y, 0.0)) / k)
        out = np.where(y >= 0.0, y + 1.0, low)
        return _scalar_or_array(out)

    def bregman(self, t, s):
        """``phi(t) - phi(s) - phi'(s) (t - s)`` without catastrophic cancellation.

        Both arguments must be positive.  Pairs on opposite sides of 1 are
        split at 1 so every piece is a nonnegative quantity.
        """
        t = self._check(t)
        s = self._check(s)
        t, s = np.broadcast_arrays(t, s)
        v = self.variant
        if v == SPLICED:
            both_low = (t < 1.0) & (s < 1.0)
            both_high = (t >= 1.0) & (s >= 1.0)
            tl = np.where(t < 1.0, t, 0.5)
            sl = np.where(s < 1.0, s, 0.5)
            low = self._power_bregman(tl, sl)
            high = 0.5 * (t - s) ** 2
            # mixed: D(t,s) = D(t,1) + D(1,s) + (phi'(1) - phi'(s)) (t - 1)
            d_t1 = np.where(t < 1.0, self._power_bregman(tl, 1.0), 0.5 * (t - 1.0) ** 2)
            d_1s = np.where(s < 1.0, self._power_bregman(1.0, sl), 0.5 * (s - 1.0) ** 2)
            cross = -np.asarray(self.phi_prime(s)) * (t - 1.0)
            out = np.where(both_low, low, np.where(both_high, high, d_t1 + d_1s + cross))
        elif v == POWER:
            out = self._power_bregman(t, s)
        elif v == LOG:
            with np.errstate(divide="ignore", invalid="ignore"):
                q = (t - s) / s
                out = q - _log_ratio(t, s)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = t * _log_ratio(t, s) - (t - s)
        return _scalar_or_array(out)

    def _power_bregman(self, t, s):
        # D(t, s) = s**m phi_m(t / s) for the pure power law
        m = self.m
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            q = (np.asarray(t) - s) / s
            inner = (np.expm1(m * _log_ratio(t, s)) - m * q) / (m * (m - 1.0))
            return np.asarray(s) ** m * inner

    # ------------------------------------------------------------------
    # mobility

    def theta(self, s, t):
        """Mobility ``(s - t) / (phi'(s) - phi'(t))``.

        Zero when either argument is zero.  Nearly equal arguments
        (relative gap at most 1e-9) use ``1 / phi''`` at the midpoint.
        """
        s = self._check(s)
        t = self._check(t)
        s, t = np.broadcast_arrays(s, t)
        zero = (s == 0) | (t == 0)
        diag = np.abs(s - t) <= DIAGONAL_RTOL * np.maximum(s, t)
        ss = np.where(zero | diag, 1.0, s)
        tt = np.where(zero | diag, 2.0, t)
        denom = self._dphi_difference(ss, tt)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            off = (ss - tt) / denom
            mid = np.where(zero, 1.0, 0.5 * (s + t))
            on = 1.0 / np.asarray(self.phi_second(mid))
        out = np.where(zero, 0.0, np.where(diag, on, off))
        return _scalar_or_array(out)

    def _dphi_difference(self, s, t):
        """``phi'(s) - phi'(t)`` for positive, distinct arguments."""
        v = self.variant
        k = self.m - 1.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if v == LOG:
                return (s - t) / (s * t)
            if v == BOLTZMANN:
                return _log_ratio(s, t)
            # t**k (expm1(k log(s/t))) / k keeps relative accuracy for close pairs
            power = t**k * np.expm1(k * _log_ratio(s, t)) / k
            if v == POWER:
                return power
            both_high = (s >= 1.0) & (t >= 1.0)
            both_low = (s < 1.0) & (t < 1.0)
            mixed = np.asarray(self.phi_prime(s)) - np.asarray(self.phi_prime(t))
            return np.where(both_high, s - t, np.where(both_low, power, mixed))

    def c_theta(self, quadrature_points: int | None = None) -> float:
        """Integral of ``theta(1 - r, 1 + r) ** -0.5`` over ``[0, 1]``.

        Near ``r = 1`` the integrand grows like ``(1 - r) ** ((m - 1) / 2)``,
        so the integral is finite exactly when ``m > -1``.  The substitution
        ``r = 1 - u**p`` with ``p = max(2, 2 / (1 + m))`` makes the integrand
        bounded before integrating.

        Parameters
        ----------
        quadrature_points : int, optional
            If given, use a composite Simpson rule on that many intervals
            (rounded up to even).  Otherwise adaptive quadrature.

        Raises
        ------
        NonFinite
            If ``m <= -1`` (divergent endpoint) or quadrature fails.
        """
        self.require_main()
        if self.m <= -1.0:
            raise NonFinite(f"theta integral diverges at r = 1 for m = {self.m} <= -1")
        p = max(2.0, 2.0 / (1.0 + self.m))

        def smooth(u):
            u = np.asarray(u, dtype=float)
            gap = u**p
            with np.errstate(divide="ignore", invalid="ignore"):
                val = p * u ** (p - 1.0) / np.sqrt(self.theta(gap, 2.0 - gap))
            # limit at u = 0 from theta(e, 2) ~ 2 (1 - m) e**(1 - m)
            edge = p / np.sqrt(2.0 * (1.0 - self.m)) if p * (1.0 + self.m) / 2.0 == 1.0 else 0.0
            return np.where(gap == 0, edge, val)

        if quadrature_points is None:
            value, _ = integrate.quad(smooth, 0.0, 1.0, limit=200, epsabs=1e-13, epsrel=1e-12)
        else:
            npts = int(quadrature_points) + int(quadrature_points) % 2
            u = np.linspace(0.0, 1.0, npts + 1)
            value = integrate.simpson(smooth(u), x=u)
        if not np.isfinite(value):
            raise NonFinite("theta integral did not converge")
        return float(value)
