import csv
import warnings

import numpy as np
import pytest

from convint.errors import AmplitudeError, FrequencyRatioError
from convint.grid_fields import Grid2, SymMatrixField, sup_norm, sym_grad, wedge
from convint.kallen import (check_frequency_gap, corrugation_error, increment_ratios,
                            kallen_iterate, write_trail_csv)


@pytest.fixture(scope="module")
def data():
    g = Grid2.torus(512)
    X1, X2 = g.mesh
    H = SymMatrixField(g, 0.2 * np.cos(X1) * np.sin(X2), 0.1 * np.sin(X1 + X2),
                       0.15 * np.cos(2 * X2))
    Q = SymMatrixField(g, np.cos(X2), 0.5 * np.sin(X1), np.cos(X1 + X2))
    return g, H, Q


def test_single_round_error_is_projected_first_error(data):
    _, H, Q = data
    r = kallen_iterate(H, Q, 32.0, 2.0, 1, 0.01)
    assert sup_norm(r.F - wedge(r.E_last)) == 0.0
    assert sup_norm(r.E_prev_wedge) == 0.0


def test_error_decays_with_frequency(data):
    _, H, Q = data
    lams = np.array([32.0, 64.0, 128.0])
    N, gamma = 2, 0.01
    F = [sup_norm(kallen_iterate(H, Q, lam, 2.0, N, gamma).F) for lam in lams]
    s = np.polyfit(np.log(lams), np.log(F), 1)[0]
    expected = -N * (1 - gamma)
    assert abs(s - expected) <= 0.25 * abs(expected)


def test_trail_is_geometric(data):
    _, H, Q = data
    lam, mu, gamma = 64.0, 2.0, 0.01
    r = kallen_iterate(H, Q, lam, mu, 4, gamma)
    assert len(r.trail) == 4
    rat = increment_ratios(r.trail)
    assert np.all(rat <= lam**gamma * mu / lam)
    inc = [t.increment for t in r.trail]
    assert all(b <= a for a, b in zip(inc, inc[1:]))
    for t in r.trail:
        assert t.band_low_margin >= 0 and t.band_high_margin >= 0


def test_telescoping_identity(data):
    g, H, Q = data
    r = kallen_iterate(H, Q, 64.0, 2.0, 3, 0.01)
    lhs = SymMatrixField.identity(g) * (r.a * r.a) + sym_grad(r.Psi)
    target = H - r.E_prev_wedge
    assert sup_norm(lhs - target) / sup_norm(target) <= 1e-6
    assert r.identity_residual <= 1e-6
    # F closes the block: a^2 Id + sym grad Psi + F = H - wedge E_N
    total = lhs + r.F
    assert sup_norm(total - (H - wedge(r.E_last))) / sup_norm(H) <= 1e-6


def test_error_field_formula(data):
    g, H, Q = data
    r = kallen_iterate(H, Q, 32.0, 2.0, 2, 0.01)
    assert sup_norm(corrugation_error(r.a, Q, 32.0) - r.E_last) == 0.0


def test_amplitude_band(data):
    g, H, Q = data
    r = kallen_iterate(H, Q, 32.0, 2.0, 2, 0.05)
    pad = r.Ct * 2.0**0.05
    a2 = r.a.values**2
    assert np.all(a2 >= pad / 2) and np.all(a2 <= 1.5 * pad)


def test_band_failure_reports_iteration(data):
    _, H, Q = data
    with pytest.raises(AmplitudeError) as ei:
        kallen_iterate(H, Q * 400.0, 32.0, 2.0, 3, 0.01)
    assert ei.value.iteration == 3


def test_frequency_gap_precondition(data):
    _, H, Q = data
    with pytest.raises(FrequencyRatioError):
        kallen_iterate(H, Q, 4.0, 2.0, 2, 0.01)
    with pytest.warns(RuntimeWarning):
        check_frequency_gap(4.0, 2.0, 0.01, on_fail="warn")
    assert check_frequency_gap(64.0, 2.0, 0.0, sigma0=4.0) == 8.0


def test_deterministic(data, tmp_path):
    _, H, Q = data
    r1 = kallen_iterate(H, Q, 32.0, 2.0, 3, 0.01)
    r2 = kallen_iterate(H, Q, 32.0, 2.0, 3, 0.01)
    assert np.array_equal(r1.a.values, r2.a.values)
    p1, p2 = tmp_path / "t1.csv", tmp_path / "t2.csv"
    write_trail_csv(r1.trail, p1)
    write_trail_csv(r2.trail, p2)
    assert p1.read_bytes() == p2.read_bytes()
    rows = list(csv.DictReader(open(p1)))
    assert [int(x["n"]) for x in rows] == [1, 2, 3]
    assert float(rows[0]["increment"]) == r1.trail[0].increment


def test_padding_constant_kept_fixed(data):
    _, H, Q = data
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        r = kallen_iterate(H, Q, 32.0, 2.0, 2, 0.01, Ct=3.0)
    assert r.Ct == 3.0
