import math
import warnings
from fractions import Fraction

import numpy as np
import pytest

from convint.domains import extended_grid, unit_square
from convint.errors import (ConfigError, DomainError, FrequencyRatioError, MarginError,
                            ResolutionError, ScheduleError)
from convint.grid_fields import Grid2, SymMatrixField, VectorField, quadratic_form
from convint.stage import (StageState, codim_assignment, double_step, relaxed_frequencies,
                           run_stage, simulate_stage_bounds)


def fib(k):
    a, b = 1, 1
    for _ in range(k):
        a, b = b, a + b
    return a


# codimension rotation --------------------------------------------------


def test_codim_examples():
    assert codim_assignment(0) == (1, 2, 3)
    assert codim_assignment(1) == (3, 1, 2)
    assert codim_assignment(3) == (1, 2, 3)
    with pytest.raises(DomainError):
        codim_assignment(-1)


def test_codim_circularity():
    for k0 in range(30):
        touched = []
        for k in range(k0, k0 + 3):
            a, b, c = codim_assignment(k)
            assert {a, b, c} == {1, 2, 3}
            assert codim_assignment(k + 3) == (a, b, c)
            touched += [a, b]
        assert sorted(touched) == [1, 1, 2, 2, 3, 3]


# double step -----------------------------------------------------------


@pytest.fixture(scope="module")
def torus():
    return Grid2.torus(128)


def zero_state(g, k=0):
    return StageState(VectorField.zeros(g, 3), VectorField.zeros(g, 2), SymMatrixField.zeros(g), k)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_zero_defect_still_perturbs(torus, k):
    st = zero_state(torus, k)
    new, rep = double_step(st, 8.0, 24.0, 1.0, N=2, gamma=0.01)
    assert rep.defect_before == 0.0
    assert rep.bookkeeping_residual <= 1e-5
    alpha, beta, gam = codim_assignment(k)
    assert (rep.alpha, rep.beta) == (alpha, beta)
    changed = {j + 1 for j in range(3) if not np.array_equal(new.v.values[j], st.v.values[j])}
    assert changed == {alpha, beta}
    assert np.array_equal(new.v.values[gam - 1], st.v.values[gam - 1])
    assert new.k == k + 1


def test_frequency_order_enforced(torus):
    with pytest.raises(FrequencyRatioError):
        double_step(zero_state(torus), 8.0, 4.0, 1.0, N=2, gamma=0.01)


def test_second_amplitude_floor(torus):
    X1, X2 = torus.mesh
    z = np.zeros(torus.shape)
    v = VectorField(torus, np.stack([10 * np.cos(X2), z, z]))
    A = quadratic_form(v)  # zero defect, large d22 v^1
    st = StageState(v, VectorField.zeros(torus, 2), A)
    with pytest.raises(FrequencyRatioError, match="b\\^2"):
        double_step(st, 8.0, 24.0, 1.0, N=2, gamma=0.01)


def test_margin_shrinks_by_eta():
    dom = unit_square()
    g = extended_grid(dom, 0.6, n=256, fd_order=8)
    st = StageState(VectorField.zeros(g, 3), VectorField.zeros(g, 2), SymMatrixField.identity(g),
                    0, 0.3, dom)
    with pytest.raises(MarginError):
        double_step(st, 24.0, 144.0, 4.0, N=2, gamma=0.01, eta=0.4)
    new, rep = double_step(st, 24.0, 96.0, 4.0, N=2, gamma=0.01, eta=0.25, tol=1e-4)
    assert math.isclose(new.margin, 0.05)
    assert rep.defect_after < 0.5 * rep.defect_before
    assert rep.bookkeeping_relative <= 1e-4


def test_relaxed_frequencies():
    assert relaxed_frequencies(4.0, 2, (6.0, 6.0)) == [(24.0, 144.0), (864.0, 5184.0)]
    g = Grid2.torus(256, length=1.0)
    for lam, mu in relaxed_frequencies(7.0, 2, (3.0, 3.0), g):
        for f in (lam, mu):
            assert abs(f / (2 * np.pi) - round(f / (2 * np.pi))) < 1e-9


# stages ----------------------------------------------------------------


def test_nyquist_guard():
    dom = unit_square()
    g = extended_grid(dom, 1.2, n=96)
    v, w, A = VectorField.zeros(g, 3), VectorField.zeros(g, 2), SymMatrixField.identity(g)
    # sigma = lam l = 2 and mu0 = (K+1)/l = 10
    with pytest.raises(ResolutionError):
        run_stage(v, w, A, 0.5, 4.0, N=4, K=4, domain=dom, mode="strict", sigma0=1.0)


def test_strict_mode_requires_frequency_gap():
    dom = unit_square()
    g = extended_grid(dom, 1.2, n=96)
    v, w, A = VectorField.zeros(g, 3), VectorField.zeros(g, 2), SymMatrixField.identity(g)
    with pytest.raises(ScheduleError):
        run_stage(v, w, A, 0.5, 4.0, N=4, K=4, domain=dom, mode="strict", sigma0=4.0)
    with pytest.raises(ConfigError):
        run_stage(v, w, A, 0.5, None, N=4, K=4, domain=dom, mode="strict")


def test_stage_margin_check():
    dom = unit_square()
    g = extended_grid(dom, 0.2, n=64)
    v, w, A = VectorField.zeros(g, 3), VectorField.zeros(g, 2), SymMatrixField.identity(g)
    with pytest.raises(MarginError):
        run_stage(v, w, A, 0.3, K=2, domain=dom)


@pytest.fixture(scope="module")
def relaxed_run():
    dom = unit_square()
    g = extended_grid(dom, 0.75, n=512, fd_order=8)
    X1, X2 = g.mesh
    v = VectorField(g, np.stack([0.05 * np.sin(X1) * X2, 0.05 * np.cos(X2), 0.02 * X1 * X2]))
    w, A = VectorField.zeros(g, 2), SymMatrixField.identity(g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = run_stage(v, w, A, 0.2, N=2, K=2, gamma=0.01, domain=dom,
                        frequencies=[(16.0, 48.0), (64.0, 96.0)], mu0=5.0, eta=0.2, tol=1e-4,
                        on_precondition="warn")
    return dom, g, v, out


def test_relaxed_stage_reduces_defect(relaxed_run):
    _, _, _, (v1, w1, rep) = relaxed_run
    assert rep.measured["defect"] < rep.measured["defect_initial"]
    assert len(rep.steps) == 2 and [s.k for s in rep.steps] == [0, 1]
    for s in rep.steps:
        assert s.bookkeeping_relative <= 1e-4
        assert s.b2_min >= s.b2_floor
    for key, r in rep.ratios.items():
        assert math.isfinite(r) and r > 0, key
    rows = rep.step_rows()
    assert rows[0]["alpha"] == 1 and rows[1]["alpha"] == 3


def test_mollification_constant_reported(relaxed_run):
    _, _, _, (_, _, rep) = relaxed_run
    assert 0 < rep.mollification_constant < 1.0
    assert rep.Mbar >= 1.0


# constant ledger -------------------------------------------------------


def test_ledger_examples():
    L = simulate_stage_bounds(4, 4, 0.01)
    assert L.decay_exponent == 32 and L.growth_exponent == 20
    assert len(L.Ct) == 5
    with pytest.raises(DomainError):
        simulate_stage_bounds(3, 4, 0.01)


def test_ledger_exact_over_range():
    for N in range(4, 17):
        for K in range(4, 17):
            L = simulate_stage_bounds(N, K, 0.01)
            assert L.decay_exponent == 2 * (fib(K) - 1) * N
            assert L.growth_exponent == Fraction(fib(K + 1) - 2) + Fraction((fib(K + 1) - 1) * N, 2)
            assert isinstance(L.decay_exponent, Fraction)


def test_ledger_gamma_part():
    # Ct_K / Ct_0 carries sigma^(gamma * (P - e(mu_K)) - decay)
    for N, K in [(4, 4), (6, 5), (9, 7)]:
        L = simulate_stage_bounds(N, K, 0.01)
        F = [fib(j) for j in range(K + 4)]
        lam = [Fraction(F[k + 2] - 2) + Fraction((F[k + 2] - 3) * N, 2) for k in range(1, K)]
        mu = [Fraction(F[k + 2] - 2) + Fraction((F[k + 3] - 3) * N, 2) for k in range(1, K)]
        lam.append(Fraction(2 * F[K] - 2) + Fraction((F[K + 2] - 3) * N, 2))
        mu.append(Fraction(2 * F[K] - 2) + Fraction((3 * F[K] - 3) * N, 2))
        P = sum(mu) + N * sum(lam)
        assert L.Lambda_exponent == P
        assert L.gamma_part == P - mu[-1]
        assert L.Ct[K].s0.value(N) == -L.decay_exponent
        assert math.isclose(L.gamma_bar, 0.01 * float(P))


def test_ledger_values_shrink():
    L = simulate_stage_bounds(4, 4, 0.001, sigma=2.0)
    vals = [L.value(m) for m in L.Ct]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert len(L.rows()) == 5
