import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from convint.errors import DomainError
from convint.schedule import (ALPHA_LIMIT, GOLDEN, HalfIntExponent, alpha_of, decay_telescope,
                              exponent_summary, fibonacci, gamma_max, lambda_exponent,
                              make_schedule, quotient_identities, ratio_r, verify_conditions)

EXACT_RATIO_NAMES = {"first_ratio", "middle_ratio_a", "middle_ratio_b", "last_ratio_a",
                     "last_ratio_b"}


def fib_list(n):
    f = [1, 1]
    while len(f) <= n:
        f.append(f[-1] + f[-2])
    return f


def test_fibonacci_values():
    assert fibonacci(0) == 1 and fibonacci(1) == 1 and fibonacci(6) == 13
    assert [fibonacci(k) for k in range(8)] == fib_list(7)
    for k in range(89):
        assert fibonacci(k + 2) - fibonacci(k + 1) - fibonacci(k) == 0
    with pytest.raises(DomainError):
        fibonacci(91)
    with pytest.raises(DomainError):
        fibonacci(-1)


def test_half_integer_exponent_arithmetic():
    e = HalfIntExponent(3, 5)
    assert e.value(4) == 13 and e.value(3) == Fraction(21, 2)
    assert (e + HalfIntExponent(1, -1)).value(2) == 8
    assert (-e).value(2) == -8 and e.scaled(2).value(2) == 16


def test_example_schedule():
    s = make_schedule(1.0, 2.0, 4, 4)
    assert [s.e_lam(k) for k in range(1, 5)] == [1, 7, 16, 28]
    assert [s.e_mu(k) for k in range(1, 5)] == [5, 13, 26, 32]
    assert s.lam(4) / s.mu(3) == 4.0
    assert s.e_mu(1) - s.e_lam(1) == 4 == s.N * (s.e_lam(1) - s.e_mu(0))
    assert s.is_monotone()


def test_schedule_preconditions():
    with pytest.raises(DomainError):
        make_schedule(1.0, 2.0, 4, 3)
    with pytest.raises(DomainError):
        make_schedule(1.0, 1.0, 4, 4)
    with pytest.raises(DomainError):
        make_schedule(1.0, 2.0, 0, 4)


def closed_form_exponents(N, K):
    F = fib_list(K + 3)
    lam = [Fraction(F[k + 2] - 2) + Fraction((F[k + 2] - 3) * N, 2) for k in range(1, K)]
    mu = [Fraction(F[k + 2] - 2) + Fraction((F[k + 3] - 3) * N, 2) for k in range(1, K)]
    lam.append(Fraction(2 * F[K] - 2) + Fraction((F[K + 2] - 3) * N, 2))
    mu.append(Fraction(2 * F[K] - 2) + Fraction((3 * F[K] - 3) * N, 2))
    return lam, mu


@pytest.mark.parametrize("N,K", [(4, 4), (5, 7), (12, 12), (1, 4)])
def test_exponents_match_closed_form(N, K):
    s = make_schedule(1.0, 2.0, N, K)
    lam, mu = closed_form_exponents(N, K)
    assert [s.e_lam(k) for k in range(1, K + 1)] == lam
    assert [s.e_mu(k) for k in range(1, K + 1)] == mu


def test_quotients_and_telescope():
    for N in range(4, 13):
        for K in range(4, 13):
            s = make_schedule(1.0, 2.0, N, K)
            F = fib_list(K + 2)
            for k in range(1, K):
                assert s.e_lam(k) - s.e_mu(k - 1) == F[k]
                assert s.e_mu(k) - s.e_lam(k) == Fraction(F[k + 1] * N, 2)
            assert s.e_lam(K) - s.e_mu(K - 1) == F[K - 2]
            assert s.e_mu(K) - s.e_lam(K) == Fraction(F[K - 2] * N, 2)
            assert all(got == exp for _, _, got, exp in quotient_identities(s))
            assert decay_telescope(s) == -2 * (F[K] - 1) * N
            lam, mu = closed_form_exponents(N, K)
            assert lambda_exponent(s) == sum(mu) + N * sum(lam)


def test_all_conditions_exact():
    for N in range(4, 13):
        for K in range(4, 13):
            s = make_schedule(1.0, 2.0, N, K)
            rep = verify_conditions(s, gamma_max(N, K))
            assert rep.passed, (N, K, rep.failures())
            for c in rep.conditions:
                assert c.exact
                if c.name in EXACT_RATIO_NAMES:
                    assert c.margin == 0


def test_gamma_violation_names_step():
    N, K, sigma = 4, 4, 2.0
    g0 = 2 / ((fibonacci(K + 2) - 3) * Fraction(2 + N))
    assert g0 == gamma_max(N, K)
    s = make_schedule(1.0, sigma, N, K)
    sigma0 = sigma**0.8
    assert verify_conditions(s, g0, sigma0).passed
    rep = verify_conditions(s, g0 * Fraction(3, 2), sigma0)
    assert not rep.passed
    bad = [c for c in rep.failures() if c.name == "lambda_growth"]
    assert [c.k for c in bad] == [K - 1]
    assert [c.name for c in rep.failures()] == ["lambda_growth", "gamma_small"]


def test_sigma0_max_reported():
    s = make_schedule(1.0, 2.0, 4, 4)
    rep = verify_conditions(s, Fraction(1, 100))
    assert rep.passed
    # the growth conditions stay satisfied exactly up to the reported sigma0
    assert verify_conditions(s, Fraction(1, 100), rep.sigma0_max * (1 - 1e-9)).passed
    assert not verify_conditions(s, Fraction(1, 100), rep.sigma0_max * 1.01).passed


def test_base_frequency_enters_as_offset():
    s = make_schedule(10.0, 2.0, 4, 4)
    rep = verify_conditions(s, 0.01, 1.0)
    assert all(not c.exact for c in rep.by_name("lambda_growth"))
    assert all(c.exact and c.margin == 0 for c in rep.conditions if c.name in EXACT_RATIO_NAMES)


def test_exponent_summary_example():
    e = exponent_summary(4, 4)
    assert e["r"] == Fraction(20, 32) and e["alpha"] == Fraction(4, 9)
    assert e["decay_exponent"] == 32 and e["growth_exponent"] == 20
    assert e["gamma_max"] == Fraction(1, 30)
    with pytest.raises(DomainError):
        exponent_summary(3, 4)


def test_limits():
    assert abs(float(alpha_of(10**6, 20)) - ALPHA_LIMIT) < 1e-3
    for K in (4, 8, 20):
        F = fib_list(K + 1)
        lim = Fraction(F[K + 1] - 1, 4 * (F[K] - 1))
        assert exponent_summary(4, K)["r_limit_N"] == lim
        assert abs(float(ratio_r(10**9, K)) - float(lim)) < 1e-8
    assert abs(float(exponent_summary(4, 60)["r_limit_N"]) - GOLDEN / 4) < 1e-12
    assert abs(1 / (1 + GOLDEN / 2) - ALPHA_LIMIT) < 1e-15


def test_alpha_monotone_and_above_prior_exponent():
    ties = []
    for K in range(4, 65):
        for N in range(4, 65):
            a = alpha_of(N, K)
            if K < 64:
                assert alpha_of(N, K + 1) >= a
                if alpha_of(N, K + 1) == a:
                    ties.append(("K", N, K))
            if N < 64:
                assert alpha_of(N + 1, K) > a
            if K >= 5 and N >= 8:
                assert a > Fraction(7, 15)
    # r(4, 4) = r(4, 5) = 5/8 is the only place where alpha does not strictly increase
    assert ties == [("K", 4, 4)]


@given(N=st.integers(4, 40), K=st.integers(4, 40))
def test_alpha_below_cap(N, K):
    a = alpha_of(N, K)
    assert 0 < a < ALPHA_LIMIT
    assert math.isclose(float(a), 1 / (1 + 2 * float(ratio_r(N, K))))
