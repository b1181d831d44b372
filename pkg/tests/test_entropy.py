import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmopt.entropy import BOLTZMANN, LOG, POWER, EntropyFamily, kappa
from swarmopt.errors import DomainError, NonFinite

FAM = EntropyFamily(-1.0)
ms = st.floats(-4.0, -0.1)
pos = st.floats(1e-6, 1e3)


def test_phi_hand_values():
    assert FAM.phi(1.0) == 0.0
    assert FAM.phi(2.0) == pytest.approx(0.5, abs=1e-15)
    assert FAM.phi(0.5) == pytest.approx(0.25, abs=1e-15)


def test_derivative_hand_values():
    assert FAM.phi_prime(1.0) == 0.0
    assert FAM.phi_prime(0.5) == pytest.approx(-1.5, abs=1e-15)
    assert FAM.phi_second(0.5) == pytest.approx(8.0, abs=1e-14)


def test_g_inverse_values():
    assert FAM.g_inverse(0.0) == pytest.approx(1.0)
    assert FAM.g_inverse(1.0) == pytest.approx(2.0)
    assert FAM.g_inverse(-1.5) == pytest.approx(0.5, abs=1e-14)


def test_theta_values():
    assert FAM.theta(3.0, 0.0) == 0.0
    assert FAM.theta(4.0, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert FAM.theta(0.5, 2.0) == pytest.approx(0.6, abs=1e-15)
    assert FAM.theta(0.5, 1.5) == pytest.approx(0.5, abs=1e-15)
    assert FAM.theta(1.0, 1.0) == pytest.approx(1.0)


def test_phi_at_zero_is_infinite():
    assert FAM.phi(0.0) == np.inf


def test_kappa_values():
    assert kappa(-1.0) == 0.25
    assert kappa(-2.0) == pytest.approx(1 / 3)
    assert kappa(-1e9) < 0.5
    assert kappa(-1e9) == pytest.approx(0.5, abs=1e-8)
    with pytest.raises(DomainError):
        kappa(0.0)


def test_nonnegative_m_rejected():
    with pytest.raises(DomainError):
        EntropyFamily(0.5)


def test_c_theta_diverges_for_m_at_most_minus_one():
    with pytest.raises(NonFinite):
        EntropyFamily(-1.0).c_theta()
    with pytest.raises(NonFinite):
        EntropyFamily(-2.0).c_theta()


def test_c_theta_matches_simpson_oracle():
    fam = EntropyFamily(-0.5)
    # independent oracle: r = 1 - u**8 makes the integrand vanish at u = 0
    k = 1_000_000
    u = np.linspace(0.0, 1.0, k + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = 8 * u**7 / np.sqrt(fam.theta(u**8, 2.0 - u**8))
    f[0] = 0.0
    h = 1.0 / k
    simpson = h / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())
    assert fam.c_theta() == pytest.approx(simpson, rel=1e-7)


@given(ms, pos, pos)
def test_bregman_nonnegative_and_matches_definition(m, s, t):
    fam = EntropyFamily(m)
    b = float(fam.bregman(s, t))
    direct = float(fam.phi(s) - fam.phi(t) - fam.phi_prime(t) * (s - t))
    assert b >= 0
    assert b == pytest.approx(direct, rel=1e-6, abs=1e-9 * (1 + abs(float(fam.phi(s)))))


@given(ms, pos, pos)
def test_theta_symmetric_positive_and_between_extremes(m, s, t):
    fam = EntropyFamily(m)
    th = float(fam.theta(s, t))
    assert th == pytest.approx(float(fam.theta(t, s)), rel=1e-12)
    assert th > 0
    lo, hi = sorted([1 / float(fam.phi_second(s)), 1 / float(fam.phi_second(t))])
    assert lo * (1 - 1e-9) <= th <= hi * (1 + 1e-9)


@given(ms, pos)
def test_phi_second_at_least_one(m, r):
    assert float(EntropyFamily(m).phi_second(r)) >= 1.0 - 1e-12


@given(ms, st.floats(-50.0, 50.0))
def test_g_inverse_inverts_derivative(m, y):
    fam = EntropyFamily(m)
    r = float(fam.g_inverse(y))
    assert float(fam.phi_prime(r)) == pytest.approx(y, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("variant", [POWER, LOG, BOLTZMANN])
def test_reference_variants_convex_and_normalized(variant):
    fam = EntropyFamily(-1.0, variant=variant)
    r = np.linspace(0.1, 5.0, 50)
    assert float(fam.phi(1.0)) == pytest.approx(0.0, abs=1e-15)
    assert float(fam.phi_prime(1.0)) == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.asarray(fam.phi_second(r)) > 0)


@pytest.mark.parametrize("m", [-0.5, -1.0, -2.0])
def test_bregman_and_theta_finite_far_below_reference(m):
    from swarmopt import _kernels

    fam = EntropyFamily(m)
    t, s = 5e-20, 0.9
    direct = float(fam.phi(t)) - float(fam.phi(s)) - float(fam.phi_prime(s)) * (t - s)
    assert float(fam.bregman(t, s)) == pytest.approx(direct, rel=1e-12)
    assert _kernels.bregman(t, s, m) == pytest.approx(direct, rel=1e-12)
    th = (t - s) / (float(fam.phi_prime(t)) - float(fam.phi_prime(s)))
    assert float(fam.theta(t, s)) == pytest.approx(th, rel=1e-12)
    assert _kernels.theta(t, s, m) == pytest.approx(th, rel=1e-12)
