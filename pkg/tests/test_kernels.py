import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from pinbounds import DomainError, InterArrivalLaw, UnrepresentableKernelError
from pinbounds.kernels import (
    Family,
    c_of_gamma,
    dampen,
    dc_dgamma,
    k_exact,
    kernel_entropy,
    log_k,
    normalized,
    renewal_mass,
    tilt_kernel,
)

# Frozen with mpmath at 40 digits: exact head sum over n < 2000 plus a Hurwitz-zeta
# expansion of the tail built from the Bernoulli-polynomial series of
# log Gamma(n - 1/2) / Gamma(n + 1); identical when the cutoff is moved to 4000.
SRW_C = {
    0.7: 8.767008285409888038881054,
    0.8: 2.307241543130917513259594,
    0.9: 1.377247045876135728213967,
    1.0: 1.0,
}
SRW_ENTROPY = 2.667343973217820349130738


def first_return_counts(n_max):
    """Number of +-1 paths of length 2n whose first return to 0 is at 2n, by transfer counting."""
    counts = []
    for n in range(1, n_max + 1):
        # paths that leave 0 upward and stay >= 1 until the last step
        row = {1: 1}
        for _ in range(2 * n - 2):
            nxt = {}
            for x, c in row.items():
                for y in (x - 1, x + 1):
                    if y >= 1:
                        nxt[y] = nxt.get(y, 0) + c
            row = nxt
        counts.append(2 * row.get(1, 0))
    return counts


def test_srw_matches_path_enumeration():
    srw = InterArrivalLaw.srw_return()
    for n, count in enumerate(first_return_counts(20), start=1):
        exact = Fraction(count, 4**n)
        assert k_exact(srw, n) == exact
        assert log_k(srw, n) == pytest.approx(math.log(exact), rel=0, abs=4e-16 * (1 + abs(math.log(exact))))


def test_small_gap_values():
    srw, wet = InterArrivalLaw.srw_return(), InterArrivalLaw.wetting_half_srw()
    assert log_k(srw, 1) == pytest.approx(math.log(1 / 2), abs=1e-16)
    assert log_k(srw, 2) == pytest.approx(math.log(1 / 8), abs=1e-15)
    assert log_k(srw, 3) == pytest.approx(math.log(1 / 16), abs=1e-15)
    assert log_k(wet, 1) == pytest.approx(math.log(1 / 4), abs=1e-16)
    for bad in (0, -3):
        with pytest.raises(DomainError):
            log_k(srw, bad)


def test_wetting_is_half_srw():
    srw, wet = InterArrivalLaw.srw_return(), InterArrivalLaw.wetting_half_srw()
    for n in range(1, 30):
        assert k_exact(wet, n) == k_exact(srw, n) / 2
    n = np.array([10, 1000, 10**5, 10**7])
    np.testing.assert_allclose(log_k(wet, n), log_k(srw, n) - math.log(2), rtol=0, atol=1e-13)


@pytest.mark.parametrize("gamma", sorted(SRW_C))
def test_srw_c_gamma_oracle(gamma):
    c = c_of_gamma(InterArrivalLaw.srw_return(), gamma)
    assert abs(c.value - SRW_C[gamma]) <= max(c.error, 1e-15) * 10
    assert abs(c.value - SRW_C[gamma]) <= 1e-12 * SRW_C[gamma]


def test_srw_entropy_oracle():
    e = kernel_entropy(InterArrivalLaw.srw_return())
    assert abs(e.value - SRW_ENTROPY) <= 1e-12


def test_srw_c_diverges_at_two_thirds():
    srw = InterArrivalLaw.srw_return()
    assert not c_of_gamma(srw, 2.0 / 3.0).finite
    assert not c_of_gamma(srw, 0.5).finite
    with pytest.raises(UnrepresentableKernelError):
        tilt_kernel(srw, 0.6)


@pytest.mark.parametrize("alpha,gamma", [(0.5, 0.8), (0.3, 0.9), (1.5, 0.5), (0.9, 1.0)])
def test_pure_power_law_against_zeta(alpha, gamma):
    law = InterArrivalLaw.power_law(alpha, amplitude=0.2)
    expected = 0.2**gamma * special.zeta((1 + alpha) * gamma)
    c = c_of_gamma(law, gamma)
    assert c.value == pytest.approx(expected, rel=1e-11)
    d = dc_dgamma(law, gamma)
    # d/dgamma of A^gamma zeta(s gamma)
    h = 1e-5
    fd = (0.2 ** (gamma + h) * special.zeta((1 + alpha) * (gamma + h))
          - 0.2 ** (gamma - h) * special.zeta((1 + alpha) * (gamma - h))) / (2 * h)
    if gamma < 1.0:
        assert d.value == pytest.approx(fd, rel=1e-7)


def test_mass_constructor():
    law = InterArrivalLaw.power_law(0.5, mass=0.3)
    assert c_of_gamma(law, 1.0).value == pytest.approx(0.3, rel=1e-12)
    lp = InterArrivalLaw.log_power_law(0.5, 3.0, mass=0.5)
    assert c_of_gamma(lp, 1.0).value == pytest.approx(0.5, rel=1e-12)


def test_log_power_law_tail_against_longer_table():
    short = InterArrivalLaw.log_power_law(0.5, 3.0, amplitude=0.3, n_exact=1000)
    long = InterArrivalLaw.log_power_law(0.5, 3.0, amplitude=0.3, n_exact=200_000)
    for gamma in (2.0 / 3.0, 0.8, 1.0):
        a, b = c_of_gamma(short, gamma), c_of_gamma(long, gamma)
        assert a.finite
        assert abs(a.value - b.value) <= a.error + b.error + 1e-12


def test_only_log_power_law_reaches_the_left_end():
    assert not c_of_gamma(InterArrivalLaw.power_law(0.5, amplitude=0.3), 2.0 / 3.0).finite
    assert c_of_gamma(InterArrivalLaw.log_power_law(0.5, 3.0, amplitude=0.3), 2.0 / 3.0).finite
    # log exponent not above 1/gamma0 = 1.5 still diverges
    assert not c_of_gamma(InterArrivalLaw.log_power_law(0.5, 1.2, amplitude=0.3), 2.0 / 3.0).finite


def test_large_n_values_are_finite_and_follow_the_tail():
    srw = InterArrivalLaw.srw_return()
    n = np.array([10**6, 10**9, 10**12])
    lk = log_k(srw, n)
    assert np.all(np.isfinite(lk))
    np.testing.assert_allclose(lk, math.log(1 / (2 * math.sqrt(math.pi))) - 1.5 * np.log(n.astype(float)), atol=1e-5)


def test_continuation_meets_table():
    srw = InterArrivalLaw.srw_return(n_exact=1000)
    ref = InterArrivalLaw.srw_return()
    n = np.arange(990, 1020)
    np.testing.assert_allclose(log_k(srw, n), log_k(ref, n), rtol=0, atol=1e-13)


def test_dampen_is_a_per_gap_factor():
    srw = InterArrivalLaw.srw_return()
    damped = dampen(srw, math.log(2))
    assert c_of_gamma(damped, 1.0).value == pytest.approx(0.5, rel=1e-12)
    for gamma in (0.7, 0.9):
        assert c_of_gamma(damped, gamma).value == pytest.approx(SRW_C[gamma] * 2**-gamma, rel=1e-12)
    assert dampen(srw, 0.0) is srw
    with pytest.raises(DomainError):
        dampen(srw, -0.1)


def test_tilted_kernel_is_a_probability():
    srw = InterArrivalLaw.srw_return()
    for gamma in (0.7, 0.85, 1.0):
        q = tilt_kernel(srw, gamma)
        total = np.exp(q.log_table).sum() + q.tail().value
        assert total == pytest.approx(1.0, abs=1e-11)
        assert q.tail_slope() == pytest.approx(1.5 * gamma)
    assert tilt_kernel(srw, 0.9).effective_alpha == pytest.approx(0.35, abs=1e-15)
    one = tilt_kernel(srw, 1.0)
    np.testing.assert_allclose(one.log_q(np.arange(1, 200)), log_k(srw, np.arange(1, 200)), atol=1e-14)
    wet = normalized(InterArrivalLaw.wetting_half_srw())
    np.testing.assert_allclose(wet.log_q(np.arange(1, 50)), log_k(srw, np.arange(1, 50)), atol=1e-13)


def test_renewal_mass_against_convolution_powers():
    wet = InterArrivalLaw.wetting_half_srw()
    n = 100
    k = np.exp(log_k(wet, np.arange(1, n + 1)))
    kk = np.concatenate([[0.0], k])
    # u = sum_j K^{*j}
    u = np.zeros(n + 1)
    power = np.zeros(n + 1)
    power[0] = 1.0
    for _ in range(n + 1):
        u += power
        power = np.convolve(power, kk)[: n + 1]
    rm = renewal_mass(wet, n)
    np.testing.assert_allclose(rm.u, u, rtol=1e-13)
    assert rm.u[0] == 1.0 and rm.u[1] == k[0]
    assert rm.limit_ratio == pytest.approx(4.0, rel=1e-9)
    assert renewal_mass(InterArrivalLaw.srw_return(), 10).limit_ratio is None


def test_renewal_ratio_approaches_limit():
    wet = InterArrivalLaw.wetting_half_srw()
    rm = renewal_mass(wet, 10_000)
    ratio = rm.u[-1] / math.exp(log_k(wet, 10_000))
    assert ratio == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(family=Family.POWER_LAW, alpha=-0.1, amplitude=0.3),
        dict(family=Family.POWER_LAW, alpha=0.5, amplitude=0.0),
        dict(family=Family.SRW_RETURN, alpha=0.4, amplitude=0.3),
        dict(family=Family.POWER_LAW, alpha=0.5, amplitude=0.3, log_exponent=1.0),
        dict(family=Family.POWER_LAW, alpha=0.5, amplitude=0.3, n_exact=10),
    ],
)
def test_invalid_laws_rejected(kwargs):
    with pytest.raises(DomainError):
        InterArrivalLaw(**kwargs)


def test_mass_above_one_rejected():
    with pytest.raises(DomainError):
        InterArrivalLaw.power_law(0.5, amplitude=2.0)
    with pytest.raises(DomainError):
        InterArrivalLaw.power_law(0.5, mass=1.2)


def test_gamma_domain():
    srw = InterArrivalLaw.srw_return()
    for g in (0.0, -0.2, 1.01):
        with pytest.raises(DomainError):
            c_of_gamma(srw, g)


@given(st.floats(0.67, 1.0), st.floats(0.67, 1.0))
def test_c_decreasing_in_gamma(g1, g2):
    srw = InterArrivalLaw.srw_return()
    lo, hi = sorted((g1, g2))
    assert c_of_gamma(srw, lo).value >= c_of_gamma(srw, hi).value - 1e-12


@given(st.floats(0.67, 0.99))
def test_c_derivative_matches_difference(gamma):
    srw = InterArrivalLaw.srw_return()
    h = 1e-6
    fd = (c_of_gamma(srw, gamma + h).value - c_of_gamma(srw, gamma - h).value) / (2 * h)
    assert dc_dgamma(srw, gamma).value == pytest.approx(fd, rel=1e-5)


@given(st.floats(0.1, 3.0), st.floats(0.01, 1.0))
def test_log_k_tail_monotone(alpha, mass):
    law = InterArrivalLaw.power_law(alpha, mass=mass, n_exact=1000)
    lk = log_k(law, np.array([10, 100, 1000, 1001, 5000, 10**6]))
    assert np.all(np.diff(lk) < 0)
