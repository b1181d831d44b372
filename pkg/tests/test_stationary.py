import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmopt.entropy import EntropyFamily
from swarmopt.functionals import first_order_residual
from swarmopt.model import EnergyLandscape, random_landscape
from swarmopt.stationary import eta_asymptotics_check, limit_measure, solve_c, solve_eta

FAM = EntropyFamily(-1.0)
seeds = st.integers(0, 2**32 - 1)


def complete(n, U):
    return EnergyLandscape.from_matrix(np.ones((n, n)) - n * np.eye(n), np.full(n, 1 / n), U)


def test_zero_beta():
    land = complete(3, [0.0, 1.0, 2.0])
    assert solve_c(land, FAM, 0.0) == 0.0
    np.testing.assert_allclose(solve_eta(land, FAM, 0.0).rho, 1.0, atol=1e-15)


def test_constant_objective():
    land = complete(4, np.full(4, 1.7))
    assert solve_c(land, FAM, 3.0) == pytest.approx(3.0 * 1.7, rel=1e-14)
    np.testing.assert_allclose(solve_eta(land, FAM, 3.0).rho, 1.0, atol=1e-13)


def _g_oracle(y, m):
    y = np.asarray(y, dtype=float)
    low = (1.0 + (m - 1.0) * np.minimum(y, 0.0)) ** (1.0 / (m - 1.0))
    return np.where(y >= 0, 1.0 + y, low)


def test_c_matches_bisection_oracle():
    land = complete(3, [0.0, 1.0, 2.0])
    lo, hi = -50.0, 50.0
    for _ in range(10_000):
        mid = 0.5 * (lo + hi)
        if land.ell @ _g_oracle(mid - 2.0 * land.objective, -1.0) > 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-15:
            break
    assert solve_c(land, FAM, 2.0) == pytest.approx(0.5 * (lo + hi), abs=1e-12)


def test_ring_mass_near_minimizer(ring):
    zeta = solve_eta(ring, FAM, 5.0).zeta
    assert 0.60 <= zeta[[6, 7, 8]].sum() <= 0.70


def test_equal_objective_gives_equal_density():
    land = complete(4, [0.0, 1.0, 1.0, 3.0])
    eta = solve_eta(land, FAM, 2.0).rho
    assert eta[1] == pytest.approx(eta[2], rel=1e-15)


def test_limit_measure(ring):
    np.testing.assert_array_equal(limit_measure(ring), np.eye(20)[7])
    land = complete(3, np.zeros(3))
    np.testing.assert_allclose(limit_measure(land), land.ell)


@given(seeds, st.integers(2, 12), st.sampled_from([0.0, 1.0, 5.0, 50.0]), st.sampled_from([-0.5, -1.0, -2.0]))
def test_first_order_condition(seed, n, beta, m):
    fam = EntropyFamily(m)
    land = random_landscape(np.random.default_rng(seed), n)
    prof = solve_eta(land, fam, beta)
    assert first_order_residual(land, fam, beta, prof.rho) <= 1e-10 * max(1.0, beta)
    assert abs(prof.rho @ land.ell - 1.0) <= 1e-12
    assert np.all(prof.rho > 0)


def test_two_state_asymptotic_law(two_state):
    rep = eta_asymptotics_check(two_state, FAM, [10.0, 1e2, 1e3, 1e4])
    assert rep.scaled[-1, 1] == pytest.approx(0.5, rel=0.05)
    assert bool(rep.monotone_approach[1])
    assert rep.passed


def test_constant_objective_asymptotics():
    land = complete(3, np.zeros(3))
    rep = eta_asymptotics_check(land, FAM, [1.0, 10.0, 100.0])
    np.testing.assert_allclose(rep.eta, 1.0, atol=1e-13)
    np.testing.assert_allclose(rep.dc_dbeta, 0.0, atol=1e-8)
