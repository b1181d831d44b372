import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.linalg import expm

from swarmopt.entropy import EntropyFamily
from swarmopt.errors import DomainError, WindowTooShort
from swarmopt.flow import (
    Controls,
    Schedule,
    convergence_rate_fit,
    geometric_grid,
    integrate_annealed,
    integrate_homogeneous,
    rhs,
    rkf45,
)
from swarmopt.model import EnergyLandscape, random_density, random_landscape, spectral_gap
from swarmopt.stationary import solve_eta

FAM = EntropyFamily(-1.0)
seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.integers(2, 8))
def test_rhs_zero_beta_is_heat_flow(seed, n):
    rng = np.random.default_rng(seed)
    land = random_landscape(rng, n)
    rho = random_density(rng, land.ell).rho
    np.testing.assert_allclose(rhs(land, FAM, 0.0, rho), land.generator @ rho, atol=1e-12)


@given(seeds, st.integers(2, 8), st.sampled_from([0.0, 1.0, 5.0]))
def test_rhs_conserves_mass(seed, n, beta):
    rng = np.random.default_rng(seed)
    land = random_landscape(rng, n)
    rho = random_density(rng, land.ell).rho
    f = rhs(land, FAM, beta, rho)
    assert abs(land.ell @ f) <= 1e-12 * max(1.0, np.abs(f).max())


def test_rhs_vanishes_at_minimizer(ring):
    eta = solve_eta(ring, FAM, 5.0).rho
    assert np.abs(rhs(ring, FAM, 5.0, eta)).max() <= 1e-12


def test_heat_flow_relaxes_to_uniform():
    land = random_landscape(np.random.default_rng(3), 5)
    lam = spectral_gap(land.generator, land.ell)
    rho0 = random_density(np.random.default_rng(4), land.ell).rho
    traj = integrate_homogeneous(land, FAM, 0.0, rho0, 20.0 / lam)
    assert np.abs(traj.densities[-1] - 1.0).max() <= 1e-6


def test_heat_flow_matches_matrix_exponential():
    land = random_landscape(np.random.default_rng(5), 4)
    rho0 = random_density(np.random.default_rng(6), land.ell).rho
    times = np.linspace(0.0, 2.0, 5)
    traj = integrate_homogeneous(land, FAM, 0.0, rho0, 2.0, times=times)
    exact = np.array([expm(t * land.generator) @ rho0 for t in times])
    np.testing.assert_allclose(traj.densities, exact, rtol=1e-7, atol=1e-9)


def test_minimizer_is_fixed_point(ring):
    eta = solve_eta(ring, FAM, 5.0).rho
    traj = integrate_homogeneous(ring, FAM, 5.0, eta, 50.0)
    assert np.abs(traj.densities / eta - 1.0).max() <= 1e-9


def test_cost_nonincreasing_and_sandwich(ring):
    traj = integrate_homogeneous(ring, FAM, 5.0, np.ones(20), 200.0)
    assert traj.stats["max_cost_increase"] <= 1e-10
    assert np.all(np.diff(traj.cost) <= 1e-10)
    assert np.all(traj.sandwich_margin() >= -1e-12)


def test_compiled_and_generic_agree():
    land = random_landscape(np.random.default_rng(8), 5)
    times = np.linspace(0.0, 5.0, 6)
    a = integrate_homogeneous(land, FAM, 2.0, np.ones(5), 5.0, times=times)
    b = integrate_homogeneous(land, FAM, 2.0, np.ones(5), 5.0, times=times, compiled=False)
    np.testing.assert_allclose(a.densities, b.densities, rtol=1e-7, atol=1e-9)
    sched = Schedule.power(1.0, 0.25)
    a = integrate_annealed(land, FAM, sched, np.ones(5), 5.0, times=times)
    c = Schedule.custom(sched.beta, sched.beta_dot)
    b = integrate_annealed(land, FAM, c, np.ones(5), 5.0, times=times)
    np.testing.assert_allclose(a.densities, b.densities, rtol=1e-7, atol=1e-9)


def test_constant_schedule_matches_homogeneous(ring):
    times = np.linspace(0.0, 10.0, 11)
    a = integrate_homogeneous(ring, FAM, 3.0, np.ones(20), 10.0, times=times)
    b = integrate_annealed(ring, FAM, Schedule.constant(3.0), np.ones(20), 10.0, times=times)
    np.testing.assert_array_equal(a.densities, b.densities)


def test_constant_objective_annealed_stays_uniform():
    gen = np.ones((3, 3)) - 3 * np.eye(3)
    land = EnergyLandscape.from_matrix(gen, np.full(3, 1 / 3), np.full(3, 2.0))
    traj = integrate_annealed(land, FAM, Schedule.power(), np.ones(3), 100.0)
    np.testing.assert_allclose(traj.densities, 1.0, atol=1e-12)
    np.testing.assert_allclose(traj.nu, 1.0, atol=1e-12)


def test_annealed_ring_concentrates(ring):
    traj = integrate_annealed(ring, FAM, Schedule.power(1.0, 0.25), np.ones(20), 1e3)
    mass7 = traj.densities[:, 7] * ring.ell[7]
    assert mass7[0] == pytest.approx(0.05)
    assert mass7[-1] > mass7[0]
    decades = [np.argmin(np.abs(traj.times - t)) for t in (1.0, 10.0, 100.0, 1000.0)]
    assert np.all(np.diff(mass7[decades]) >= -0.01)
    assert np.all(traj.gap_I <= traj.annealed_bound() + 1e-12)


def test_schedule_functions():
    s = Schedule.power(2.0, 0.3)
    assert s.beta(0.0) == pytest.approx(2.0**0.3 - 1)
    assert s.beta_dot(3.0) == pytest.approx(0.3 * 5.0**-0.7)
    val, _ = integrate.quad(lambda t: s.beta(t), 0.0, 7.0)
    assert s.beta_integral(7.0) == pytest.approx(val, rel=1e-10)
    assert Schedule.power(1, 0.25).admissible(-1.0)
    assert not Schedule.power(1, 0.3).admissible(-1.0)
    with pytest.raises(DomainError):
        Schedule.power(1.0, 0.3, m=-1.0, guaranteed=True)
    with pytest.raises(DomainError):
        Schedule.power(0.5, 0.25)
    with pytest.raises(DomainError):
        Schedule.constant(-1.0)


def test_rate_targets():
    traj = integrate_annealed(random_landscape(np.random.default_rng(1), 3), FAM, Schedule.power(1, 0.25), np.ones(3), 1e3)
    fit = convergence_rate_fit(traj, window=(1.0, 1e3))
    assert fit.mass_deficit_target == pytest.approx(-1 / 8)
    # 2 alpha / kappa - 2 vanishes at alpha = kappa; the gap rate needs alpha < kappa
    assert fit.gap_target == pytest.approx(0.0)
    traj8 = integrate_annealed(random_landscape(np.random.default_rng(1), 3), FAM, Schedule.power(1, 0.125), np.ones(3), 1e3)
    assert convergence_rate_fit(traj8, window=(1.0, 1e3)).gap_target == pytest.approx(-1.0)
    with pytest.raises(WindowTooShort):
        convergence_rate_fit(traj, window=(10.0, 100.0 * 0.9))
    fam2 = EntropyFamily(-2.0)
    traj2 = integrate_annealed(random_landscape(np.random.default_rng(1), 3), fam2, Schedule.power(1, 1 / 3), np.ones(3), 1e3)
    assert convergence_rate_fit(traj2, window=(1.0, 1e3)).mass_deficit_target == pytest.approx(-1 / 9)


def test_geometric_grid():
    g = geometric_grid(1e-2, 1e2, 10)
    assert g[0] == 0.0 and g[-1] == 1e2
    assert np.all(np.diff(g) > 0)
    assert g.size == 42
    with pytest.raises(DomainError):
        geometric_grid(0.0, 1.0)


def test_rkf45_linear_system():
    A = np.array([[-1.0, 1.0], [2.0, -2.0]])
    y0 = np.array([1.0, 0.0])
    times = np.linspace(0.0, 3.0, 7)
    Y, stats = rkf45(lambda t, y: A @ y, y0, times, Controls(rtol=1e-11, atol=1e-14))
    exact = np.array([expm(t * A) @ y0 for t in times])
    np.testing.assert_allclose(Y, exact, rtol=1e-9, atol=1e-12)
    assert stats["accepted"] > 0
