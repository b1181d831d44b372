import numpy as np
import pytest
from scipy import stats
from scipy.linalg import expm

from swarmopt.entropy import EntropyFamily
from swarmopt.errors import DomainError
from swarmopt.flow import Schedule, integrate_homogeneous
from swarmopt.generators import FIRST, HYBRID, SECOND
from swarmopt.model import EnergyLandscape, random_landscape
from swarmopt.particles import (
    SwarmConfig,
    invert_integrated_rate,
    l2_distance,
    marginal_agreement,
    sample_homogeneous,
    sample_inhomogeneous,
    sample_marginal,
    simulate_swarm,
    smoothed_density,
)
from swarmopt.stationary import solve_eta

FAM = EntropyFamily(-1.0)
TWO = np.array([[-1.0, 1.0], [1.0, -1.0]])


def test_holding_times_exponential():
    path = sample_homogeneous(TWO, [1.0, 0.0], 1e5, seed=1)
    h = path.holding_times
    assert h.size > 9e4
    assert 0.99 <= h.mean() <= 1.01


def test_absorbing_state_single_segment():
    gen = np.array([[0.0, 0.0], [1.0, -1.0]])
    path = sample_homogeneous(gen, [1.0, 0.0], 10.0, seed=0)
    assert path.times.tolist() == [0.0]
    assert path.state_at(9.0) == 0


def test_marginal_matches_matrix_exponential():
    n = 100_000
    p = sample_marginal(TWO, [1.0, 0.0], 0.7, n, seed=2)
    exact = np.array([1.0, 0.0]) @ expm(0.7 * TWO)
    sigma = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(p - exact) <= 3 * sigma)


def test_seed_required():
    with pytest.raises(DomainError):
        sample_homogeneous(TWO, [1.0, 0.0], 1.0, seed=None)


def test_constant_curve_matches_homogeneous_law():
    first_inh = [sample_inhomogeneous(lambda t: TWO, [1.0, 0.0], 50.0, seed=s, exit_integral=lambda x, a, b: b - a).times[1] for s in range(1500)]
    first_hom = [sample_homogeneous(TWO, [1.0, 0.0], 50.0, seed=10_000 + s).times[1] for s in range(1500)]
    assert stats.ks_2samp(first_inh, first_hom).pvalue > 0.01


def test_inversion_closed_form():
    # rate 2s integrates to s**2, so the first jump time is sqrt(E)
    for E in (0.1, 1.0, 7.5):
        s = invert_integrated_rate(lambda s: s * s, lambda s: 2 * s, 0.0, 10.0, E)
        assert s == pytest.approx(np.sqrt(E), rel=1e-12)


def test_inversion_power_schedule_matches_bisection():
    sched = Schedule.power(1.0, 0.25)
    a, b = 0.3, 2.0
    Lam = lambda s: a * s + b * sched.beta_integral(s)
    rate = lambda s: a + b * float(sched.beta(s))
    s = invert_integrated_rate(Lam, rate, 0.0, 1e4, 5.0)
    lo, hi = 0.0, 1e4
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if Lam(mid) < 5.0 else (lo, mid)
    assert s == pytest.approx(0.5 * (lo + hi), abs=1e-10)


def test_smoothed_density_interior():
    ell = np.array([0.25, 0.75])
    rho = smoothed_density(np.array([4, 0]), ell, 0.5)
    assert np.all(rho > 0)
    assert ell @ rho == pytest.approx(1.0)


def test_single_particle_zero_beta_is_base_chain():
    land = EnergyLandscape.from_matrix(TWO, [0.5, 0.5], [0.0, 1.0])
    times = []
    for s in range(400):
        cfg = SwarmConfig(N=1, kind=SECOND, beta=0.0, horizon=50.0, seed=s, snapshot_times=[0.0, 50.0])
        res = simulate_swarm(land, FAM, cfg)
        if res.events.shape[0]:
            times.append(res.events[0, 1])
    assert stats.kstest(times, "expon").pvalue > 0.01


def test_config_validation():
    land = random_landscape(np.random.default_rng(0), 3)
    with pytest.raises(DomainError):
        simulate_swarm(land, FAM, SwarmConfig(beta=1.0, seed=None))
    with pytest.raises(DomainError):
        simulate_swarm(land, FAM, SwarmConfig(beta=1.0, schedule=Schedule.power(), seed=0))
    with pytest.raises(DomainError):
        simulate_swarm(land, FAM, SwarmConfig(beta=1.0, seed=0, kind="other"))


@pytest.mark.parametrize("kind", [FIRST, SECOND, HYBRID])
def test_swarm_deterministic(kind, ring):
    cfg = SwarmConfig(N=50, kind=kind, schedule=Schedule.power(1.0, 0.25), horizon=20.0, seed=42)
    a = simulate_swarm(ring, FAM, cfg)
    b = simulate_swarm(ring, FAM, cfg)
    assert np.array_equal(a.events, b.events)
    assert np.array_equal(a.empirical, b.empirical)
    assert a.n_events > 0


def test_event_log_consistent_with_snapshots(ring):
    cfg = SwarmConfig(N=30, kind=SECOND, beta=5.0, horizon=10.0, seed=3)
    res = simulate_swarm(ring, FAM, cfg)
    assert np.all(np.diff(res.events[:, 1]) >= 0)
    counts = np.round(res.empirical[0] * res.N).astype(int)
    for e in res.events:
        counts[int(e[3])] -= 1
        counts[int(e[4])] += 1
        assert counts.min() >= 0
    np.testing.assert_array_equal(counts, np.bincount(res.final_positions, minlength=20))
    np.testing.assert_allclose(res.empirical.sum(axis=1), 1.0)


def test_per_particle_race_same_law():
    land = random_landscape(np.random.default_rng(1), 3)
    finals = {}
    for race in ("total", "per_particle"):
        masses = []
        for s in range(60):
            cfg = SwarmConfig(N=20, kind=SECOND, beta=2.0, horizon=2.0, seed=s, race=race, snapshot_times=[0.0, 2.0])
            masses.append(simulate_swarm(land, FAM, cfg).empirical[-1, 0])
        finals[race] = masses
    assert stats.ks_2samp(finals["total"], finals["per_particle"]).pvalue > 0.001


def test_compiled_and_python_paths_same_law():
    land = random_landscape(np.random.default_rng(2), 3)
    finals = {}
    for label, a in (("compiled", 0.5), ("python", lambda t: 0.5)):
        masses = []
        for s in range(60):
            cfg = SwarmConfig(N=10, kind=HYBRID, a=a, beta=2.0, horizon=1.0, seed=s, snapshot_times=[0.0, 1.0])
            masses.append(simulate_swarm(land, FAM, cfg).empirical[-1, 0])
        finals[label] = masses
    assert stats.ks_2samp(finals["compiled"], finals["python"]).pvalue > 0.001


def test_stationary_start_stays_near_minimizer():
    land = random_landscape(np.random.default_rng(0), 5)
    eta = solve_eta(land, FAM, 3.0)
    traj = integrate_homogeneous(land, FAM, 3.0, eta.rho, 2.0, times=np.linspace(0, 2.0, 9))
    rep = marginal_agreement(land, FAM, SwarmConfig(N=2000, kind=FIRST, beta=3.0, seed=5), traj)
    assert rep.passed


def test_l2_distance():
    ell = np.array([0.5, 0.5])
    assert l2_distance(ell, [0.5, 0.5], [0.5, 0.5]) == 0.0
    assert l2_distance(ell, [1.0, 0.0], [0.5, 0.5]) == pytest.approx(1.0)


def test_ring_annealed_swarm_concentrates(ring):
    sched = Schedule.power(1.0, 0.25)
    wins = 0
    for s in range(20):
        res = simulate_swarm(ring, FAM, SwarmConfig(N=50, kind=SECOND, schedule=sched, horizon=200.0, seed=s))
        wins += res.empirical[-1, 7] > 0.05
    assert wins >= 19
