from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parasig.catalog import CatalogSolution, monneau_positive_polynomial, subtract_obstacle, timelike_polynomial
from parasig.functionals import (
    DEFAULT_QUAD,
    DegenerateField,
    TruncationSpec,
    H_I,
    check_diff_formula,
    frequency_profile,
    log_r_grid,
    log_sobolev_gap,
    monneau,
    read_profile_csv,
    weiss,
    write_profile_csv,
)
from parasig.grid import PolyField
from parasig.poly import PolySpec


def hs32():
    return CatalogSolution("halfspace_32").field()


def test_H_closed_form_for_halfspace_32():
    # H(r) = r^-2 int_{-r^2}^0 int_{x_n > 0} u^2 G = (3 sqrt(pi) / 5) r^3
    for r in (0.1, 0.3):
        H, _ = H_I(hs32(), r)
        assert H == pytest.approx(3 * math.sqrt(math.pi) / 5 * r ** 3, rel=1e-10)


@pytest.mark.parametrize("kind,m", [("halfspace_32", 1), ("halfspace_2m", 1), ("halfspace_2m1", 1), ("timelike", 2)])
def test_I_over_H_is_half_kappa(kind, m):
    sol = CatalogSolution(kind, m=m)
    H, I = H_I(sol.field(), 0.2)
    assert I / H == pytest.approx(sol.kappa / 2, rel=1e-10)


@pytest.mark.parametrize("kind,m", [("halfspace_32", 1), ("halfspace_2m_half", 2), ("taylor_cntrex", 1)])
def test_frequency_equals_kappa_on_catalog(kind, m):
    sol = CatalogSolution(kind, m=m)
    prof = frequency_profile(sol.field(), TruncationSpec(), log_r_grid(0.05, 0.5, 8), kappa=sol.kappa)
    np.testing.assert_allclose(prof.Phi, sol.kappa, atol=1e-8)


def test_min_truncation():
    # kappa^(ell0) = min(kappa, ell0) on the truncation branch at small r
    u = CatalogSolution("halfspace_2m1", m=1).field()
    r = log_r_grid(0.05, 0.12, 8)
    low = frequency_profile(u, TruncationSpec(ell0=2, M=1.0), r)
    high = frequency_profile(u, TruncationSpec(ell0=4, M=1.0), r)
    np.testing.assert_allclose(low.Phi, min(3, 2), atol=1e-8)
    assert set(low.branch) == {"mu"}
    np.testing.assert_allclose(high.Phi, min(3, 4), atol=1e-8)


def test_frequency_needs_truncation_for_zero_field():
    zero = PolyField(PolySpec.zero(2))
    with pytest.raises(DegenerateField):
        frequency_profile(zero, TruncationSpec(), [0.1])
    prof = frequency_profile(zero, TruncationSpec(ell0=3, M=1.0), [0.1])
    assert prof.Phi[0] == pytest.approx(3.0)


def test_profile_csv_roundtrip(tmp_path):
    prof = frequency_profile(hs32(), TruncationSpec(), log_r_grid(0.1, 0.4, 8), kappa=1.5)
    back = read_profile_csv(write_profile_csv(prof, tmp_path / "p.csv"))
    for c in prof.COLUMNS:
        np.testing.assert_array_equal(getattr(back, c), getattr(prof, c))
    assert back.trunc == prof.trunc and list(back.branch) == list(prof.branch)


def test_profile_guards(tmp_path):
    with pytest.raises(ValueError):
        frequency_profile(hs32(), TruncationSpec(), [])
    one = frequency_profile(hs32(), TruncationSpec(), [0.2])
    path = write_profile_csv(one, tmp_path / "one.csv")
    assert len(path.read_text().splitlines()) == 2


def test_weiss_vanishes_on_homogeneous_solutions():
    assert abs(weiss(hs32(), 1.5, 0.3)) < 1e-12
    for m in (1, 2):
        assert abs(weiss(PolyField(timelike_polynomial(m)), 2 * m, 0.3)) < 1e-9
        assert abs(weiss(PolyField(monneau_positive_polynomial(2, m)), 2 * m, 0.3)) < 1e-7


def test_weiss_sign_for_wrong_kappa():
    # W^kappa = r^{-2 kappa}(I - kappa/2 H) is negative when kappa exceeds the homogeneity
    assert weiss(hs32(), 2.0, 0.3) < 0


def test_monneau_is_zero_for_identical_polynomial():
    tay = CatalogSolution("taylor_cntrex")
    for r in (0.1, 0.4):
        assert monneau(tay.field(), timelike_polynomial(1), 2, r) == 0.0
    with pytest.raises(ValueError):
        monneau(tay.field(), PolySpec.from_text("alpha=2,0 j=0 coeff=1"), 2, 0.2)


def test_monneau_scaling_of_difference():
    # u - p = c * q with q 2-homogeneous gives a constant M = c^2 H_q(r)/r^4
    p = timelike_polynomial(1)
    q = PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,2 j=0 coeff=-1")
    u = PolyField(p + q)
    vals = [monneau(u, p, 2, r) for r in (0.1, 0.2, 0.4)]
    np.testing.assert_allclose(vals, vals[0], rtol=1e-10)


def test_diff_formula_order_on_cutoff_field():
    p = PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,2 j=0 coeff=-1")
    sub = subtract_obstacle(PolyField(p), PolySpec.zero(2), 2)
    quad = DEFAULT_QUAD.doubled()
    drs = [0.02, 0.01, 0.005]
    res = [check_diff_formula(sub.u, sub.f, 0.2, 0.125, dr, quad) for dr in drs]
    for attr in ("H_residual", "I_residual"):
        e = [getattr(d, attr) for d in res]
        order = np.polyfit(np.log(drs), np.log(e), 1)[0]
        assert order > 1.5


def test_log_r_grid():
    r = log_r_grid(0.01, 1.0, 4)
    assert len(r) == 9 and r[0] == pytest.approx(0.01) and r[-1] == pytest.approx(1.0)


def test_log_sobolev_constant_is_equality():
    gap = log_sobolev_gap(lambda x: np.full(len(x), 3.0), lambda x: np.zeros_like(x), 2, -0.5)
    assert abs(gap) < 1e-10


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2.0, -0.1), st.integers(1, 2))
def test_log_sobolev_gap_nonnegative(a, b, c, s, n):
    w = np.array([b, c][:n])

    def f(x):
        return a + np.sin(x @ w)

    def grad(x):
        return np.cos(x @ w)[:, None] * w

    assert log_sobolev_gap(f, grad, n, s) >= -1e-10


def test_log_sobolev_rejects_positive_time():
    with pytest.raises(ValueError):
        log_sobolev_gap(lambda x: x[:, 0], lambda x: np.ones_like(x), 1, 0.5)
