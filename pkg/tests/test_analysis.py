import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmopt.analysis import (
    ChiBudget,
    boundary_ratio_path,
    comparison_inequality_check,
    comparison_terms,
    decay_certificate,
    estimate_chi,
    gap_ratio,
    rayleigh_quotient_limit,
)
from swarmopt.entropy import EntropyFamily
from swarmopt.errors import DomainError
from swarmopt.flow import integrate_homogeneous
from swarmopt.functionals import gap_G, gap_I
from swarmopt.generators import linearized_generator
from swarmopt.model import random_density, random_landscape, spectral_gap, spectral_gap_vector
from swarmopt.stationary import solve_eta

FAM = EntropyFamily(-1.0)
seeds = st.integers(0, 2**32 - 1)
SMALL = ChiBudget(starts=6, maxfev_per_state=40)


def _gap_direction(land, beta):
    eta = solve_eta(land, FAM, beta).rho
    Q, w = linearized_generator(land, FAM, beta, eta)
    lam, f = spectral_gap_vector(Q, w)
    h = f / FAM.phi_second(eta)
    return eta, lam, h - land.ell @ h


@pytest.mark.parametrize("beta", [0.0, 1.0, 5.0])
def test_eigenvector_quotient_is_twice_gap(beta):
    land = random_landscape(np.random.default_rng(11), 6)
    eta, lam, h = _gap_direction(land, beta)
    assert rayleigh_quotient_limit(land, FAM, beta, h) == pytest.approx(2 * lam, rel=1e-9)


@given(seeds, st.integers(2, 7), st.sampled_from([0.0, 1.0, 5.0]))
def test_quotient_bounded_below_by_twice_gap(seed, n, beta):
    rng = np.random.default_rng(seed)
    land = random_landscape(rng, n)
    eta, lam, _ = _gap_direction(land, beta)
    h = rng.normal(size=n)
    h -= land.ell @ h
    if np.abs(h).max() < 1e-8:
        return
    assert rayleigh_quotient_limit(land, FAM, beta, h) >= 2 * lam * (1 - 1e-9)


def test_quotient_matches_ratio_near_minimizer():
    land = random_landscape(np.random.default_rng(12), 5)
    beta = 2.0
    rng = np.random.default_rng(0)
    eta = solve_eta(land, FAM, beta).rho
    h = rng.normal(size=5)
    h -= land.ell @ h
    eps = 1e-5 * eta.min() / np.abs(h).max()
    direct = gap_ratio(land, FAM, beta, eta + eps * h, eta)
    assert direct == pytest.approx(rayleigh_quotient_limit(land, FAM, beta, h), rel=1e-2)


def test_quotient_rejects_bad_directions(ring):
    with pytest.raises(DomainError):
        rayleigh_quotient_limit(ring, FAM, 1.0, np.zeros(20))
    with pytest.raises(DomainError):
        rayleigh_quotient_limit(ring, FAM, 1.0, np.ones(20))


def test_gap_ratio_matches_reference_functionals():
    rng = np.random.default_rng(3)
    land = random_landscape(rng, 6)
    eta = solve_eta(land, FAM, 3.0).rho
    rho = random_density(rng, land.ell).rho
    expected = gap_G(land, FAM, 3.0, rho) / gap_I(land, FAM, 3.0, rho, eta)
    assert gap_ratio(land, FAM, 3.0, rho) == pytest.approx(expected, rel=1e-10)


def test_ratio_blows_up_at_boundary(ring):
    path = boundary_ratio_path(ring, FAM, 5.0, exponents=[2, 6])
    assert path[1] > path[0]


@pytest.mark.parametrize("seed", [0, 1])
def test_chi_estimate_positive_and_below_twice_gap(seed):
    land = random_landscape(np.random.default_rng(seed), 5)
    for beta in (0.0, 2.0):
        rep = estimate_chi(land, FAM, beta, SMALL, seed=seed)
        assert rep.positive
        assert rep.below_twice_lambda
        assert rep.chi_estimate == pytest.approx(gap_ratio(land, FAM, beta, rep.witness), rel=1e-9)


def test_chi_at_zero_beta_reaches_twice_base_gap():
    land = random_landscape(np.random.default_rng(4), 5)
    rep = estimate_chi(land, FAM, 0.0, SMALL)
    lam = spectral_gap(land.generator, land.ell)
    assert rep.lambda_linearized == pytest.approx(lam, rel=1e-10)
    assert rep.chi_estimate == pytest.approx(2 * lam, rel=1e-3)


def test_chi_rejects_negative_beta(ring):
    with pytest.raises(DomainError):
        estimate_chi(ring, FAM, -1.0)


def test_comparison_at_reference_density():
    land = random_landscape(np.random.default_rng(5), 4)
    rho = random_density(np.random.default_rng(6), land.ell).rho
    rep = comparison_inequality_check(land, FAM, rho, rho)
    assert rep.G_star == 0.0 and rep.I_star == 0.0
    assert rep.holds


@given(seeds, st.integers(2, 8), st.sampled_from([-0.5, -1.0, -2.0]))
def test_comparison_chain_holds(seed, n, m):
    fam = EntropyFamily(m)
    rng = np.random.default_rng(seed)
    land = random_landscape(rng, n)
    rho = random_density(rng, land.ell, 0.5).rho
    rho_star = random_density(rng, land.ell, 0.5).rho
    assert comparison_inequality_check(land, fam, rho, rho_star).holds


def test_comparison_terms_recover_gap_functionals():
    rng = np.random.default_rng(7)
    land = random_landscape(rng, 6)
    eta = solve_eta(land, FAM, 2.0).rho
    rho = random_density(rng, land.ell).rho
    G, I = comparison_terms(land, FAM, rho, eta)
    assert G == pytest.approx(gap_G(land, FAM, 2.0, rho), rel=1e-9)
    assert I == pytest.approx(gap_I(land, FAM, 2.0, rho, eta), rel=1e-12)


def test_decay_certificate_zero_beta():
    land = random_landscape(np.random.default_rng(8), 4)
    lam = spectral_gap(land.generator, land.ell)
    rho0 = random_density(np.random.default_rng(9), land.ell).rho
    traj = integrate_homogeneous(land, FAM, 0.0, rho0, 5.0 / lam)
    # comparison rate along the path: lambda phi''(1/ell_min) / sup phi''(rho_min)
    rate = lam * FAM.phi_second(1 / land.ell_min) / FAM.phi_second(traj.rho_min).max()
    rep = decay_certificate(traj, rate, ceiling=lam)
    assert rep.envelope_holds and rep.positive
    assert rep.chi_tilde >= rate


def test_decay_certificate_constant_trajectory():
    land = random_landscape(np.random.default_rng(10), 4)
    eta = solve_eta(land, FAM, 1.0).rho
    traj = integrate_homogeneous(land, FAM, 1.0, eta, 5.0)
    rep = decay_certificate(traj, 10.0)
    assert rep.envelope_holds


def test_decay_certificate_ring(ring):
    Q, w = linearized_generator(ring, FAM, 5.0)
    lam = spectral_gap(Q, w)
    traj = integrate_homogeneous(ring, FAM, 5.0, np.ones(20), 2000.0)
    rep = decay_certificate(traj, 0.0, ceiling=lam)
    assert rep.positive
    assert rep.below_twice_ceiling
