from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parasig.catalog import CatalogSolution, timelike_polynomial
from parasig.classify import (
    Thresholds,
    blowup_homogeneity_residual,
    caloric_basis,
    classify_kappa,
    classify_point,
    contact_density,
    default_tolerances,
    density_radii,
    estimate_kappa,
    extract_free_boundary,
    fit_singular_polynomial,
    growth_constant_variation,
    H_slope,
    pointwise_growth,
    regular_graph_fit,
    singular_spatial_dimension,
)
from parasig.functionals import TruncationSpec
from parasig.grid import Grid, GridField, PolyField, SumField
from parasig.poly import PolySpec
from parasig.solver import SignoriniProblem, problem_from_field

H = 1 / 32


def sampled(sol, h=H, levels=3):
    g = Grid(n=2, h=h)
    X = g.coords
    ts = g.times[-levels:]
    vals = np.stack([sol.value(X, np.full(X.shape[:-1], t)) for t in ts])
    return GridField(g, ts, vals), problem_from_field(g, sol.field())


def test_default_tolerances():
    tol_c, tol_g = default_tolerances(1 / 64)
    assert tol_c == pytest.approx(0.5 / 512)
    assert tol_g == pytest.approx(5 / 64)


@pytest.mark.parametrize("kappa,density,label", [
    (1.5, None, ("regular", None)),
    (1.62, [1.0, 1.0, 1.0], ("regular", None)),
    (2.01, [0.1, 0.05, 0.0], ("singular", 1)),
    (2.01, [0.5, 0.6, 0.7], ("undetermined", None)),
    (2.01, [1.0, 1.0, 1.0], ("undetermined", None)),
    (4.1, None, ("singular", 2)),
    (3.0, [1.0, 1.0, 1.0], ("non-singular-odd-candidate", None)),
    (1.75, None, ("undetermined", None)),
    (2.5, None, ("undetermined", None)),
])
def test_classify_kappa_table(kappa, density, label):
    assert classify_kappa(kappa, density) == label


def test_thresholds_are_configurable():
    assert classify_kappa(1.7, None, Thresholds(band=0.25)) == ("regular", None)


def test_halfspace_32_free_boundary_sets():
    v, prob = sampled(CatalogSolution("halfspace_32"))
    fb = extract_free_boundary(v, prob)
    contact = fb.points("contact", -1)[:, 0]
    assert np.all(contact <= 1e-12) and np.any(contact == 0.0)
    np.testing.assert_array_equal(fb.points("gamma", -1)[:, 0], [0.0])
    np.testing.assert_array_equal(fb.points("gamma_star", -1)[:, 0], [0.0])


def test_odd_frequency_example_has_empty_free_boundary():
    # -Im (x1 + i x_n)^3: whole thin line in contact, flux vanishes only at x1 = 0
    sol = CatalogSolution("halfspace_2m1", m=1)
    v, prob = sampled(sol)
    fb = extract_free_boundary(v, prob)
    assert fb.counts()["gamma"] == 0
    np.testing.assert_array_equal(fb.points("gamma_star", -1)[:, 0], [0.0])
    pc = classify_point(sol.field(), TruncationSpec(), H, fb)
    assert pc.kappa_hat == pytest.approx(3.0, abs=0.05)
    assert pc.label == "non-singular-odd-candidate"
    assert pc.density == [1.0, 1.0, 1.0]


def test_no_contact_gives_empty_sets():
    g = Grid(n=2, h=1 / 16)
    X = g.coords
    vals = np.stack([1.0 + X[..., 0] ** 2 + 2 * t for t in g.times[-2:]]) + 2.0
    fb = extract_free_boundary(GridField(g, g.times[-2:], vals), SignoriniProblem(g))
    assert fb.counts() == {"contact": 0, "gamma": 0, "gamma_star": 0}


def test_contact_density_of_halfspace_32_is_about_half():
    v, prob = sampled(CatalogSolution("halfspace_32"))
    fb = extract_free_boundary(v, prob)
    for r in density_radii(H):
        assert contact_density(fb, np.zeros(1), 0.0, r) == pytest.approx(0.5, abs=0.1)


@pytest.mark.parametrize("kind,m", [("halfspace_32", 1), ("taylor_cntrex", 1), ("halfspace_2m_half", 2)])
def test_kappa_hat_on_catalog(kind, m):
    sol = CatalogSolution(kind, m=m)
    est = estimate_kappa(sol.field(), TruncationSpec(), H)
    assert est.kappa_hat == pytest.approx(sol.kappa, abs=0.05)
    assert est.slope_kappa == pytest.approx(sol.kappa, abs=1e-6)


@given(st.sampled_from([0.1, 10.0, 0.37, 3.0]))
def test_kappa_hat_amplitude_invariant(c):
    u = CatalogSolution("halfspace_32").field()
    base = estimate_kappa(u, TruncationSpec(), H).kappa_hat
    scaled = estimate_kappa(SumField([(c, u)]), TruncationSpec(), H).kappa_hat
    assert scaled == pytest.approx(base, abs=1e-10)


@pytest.mark.parametrize("kappa", [2, 3, 4, 5, 6])
def test_caloric_basis_dimension(kappa):
    # one even caloric extension per thin trace x1^a t^j with a + 2j = kappa
    _, basis = caloric_basis(2, kappa)
    assert len(basis) == kappa // 2 + 1
    for b in basis:
        assert b.is_caloric() and b.is_even_in_xn() and b.homogeneity() == kappa


def test_fit_recovers_exact_member():
    p = timelike_polynomial(2)
    fit = fit_singular_polynomial(PolyField(p), 4, 0.2)
    for key, c in p.terms.items():
        assert fit.coefficients[key] == pytest.approx(float(c), abs=1e-9)
    assert fit.residual < 1e-10
    assert fit.member[0]


def test_fit_ignores_higher_degree_caloric_perturbation():
    # caloric polynomials of different degree are orthogonal in the Gaussian weight
    p = timelike_polynomial(1)
    fit = fit_singular_polynomial(PolyField(p + timelike_polynomial(2)), 2, 0.2)
    for key, c in p.terms.items():
        assert fit.coefficients[key] == pytest.approx(float(c), abs=1e-9)


def test_fit_drift_is_order_r_squared():
    p = timelike_polynomial(1)
    u = PolyField(p + PolySpec.monomial(2, (4, 0)))
    errs = []
    for r in (0.2, 0.1):
        fit = fit_singular_polynomial(u, 2, r)
        errs.append(max(abs(fit.coefficients.get(k, 0.0) - float(c)) for k, c in p.terms.items()))
    assert errs[1] == pytest.approx(errs[0] / 4, rel=0.05)


def test_spatial_dimension_examples():
    assert singular_spatial_dimension(PolySpec.from_text("alpha=0,0 j=1 coeff=-1\nalpha=0,2 j=0 coeff=-1/2")) == 1
    assert singular_spatial_dimension(PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,2 j=0 coeff=-1")) == 0
    assert singular_spatial_dimension(PolySpec.from_text("alpha=2,0,0 j=0 coeff=1\nalpha=0,0,2 j=0 coeff=-1")) == 1


def test_spatial_dimension_rejects_inhomogeneous():
    with pytest.raises(ValueError):
        singular_spatial_dimension(PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,0 j=0 coeff=1"))


@given(st.integers(1, 3), st.integers(2, 3), st.fractions(min_value=Fraction(1, 9), max_value=10, max_denominator=9))
def test_timelike_polynomials_are_full_dimensional(m, n, C):
    assert singular_spatial_dimension(timelike_polynomial(m, C, n)) == n - 1


def test_regular_graph_fit_on_halfspace_32():
    v, prob = sampled(CatalogSolution("halfspace_32"), levels=6)
    fit = regular_graph_fit(extract_free_boundary(v, prob), v, prob, t_range=(-1.0, 0.0))
    assert np.all(np.abs(fit.g) <= H)
    assert fit.lip_x == 0.0 and fit.hold_t < 1e-10
    assert fit.cone_ok


def test_H_slope_and_growth_of_homogeneous_field():
    u = CatalogSolution("halfspace_32").field()
    assert H_slope(u, 0.05, 0.5) == pytest.approx(3.0, abs=1e-9)
    v, _ = sampled(CatalogSolution("halfspace_32"), levels=40)
    ratios = pointwise_growth(v, np.zeros(2), 0.0, [0.5, 0.25, 0.125])
    assert growth_constant_variation(ratios) < 0.05


def test_growth_constant_variation():
    assert growth_constant_variation(np.array([1.0, 1.0, 1.0])) == 0.0
    # decreasing ratios keep the running bound fixed
    assert growth_constant_variation(np.array([2.0, 1.0, 0.5])) == 0.0
    assert growth_constant_variation(np.array([1.0, 2.0])) == pytest.approx(0.5)


def test_blowup_homogeneity_residual_vanishes_on_catalog():
    u = CatalogSolution("halfspace_32").field()
    assert blowup_homogeneity_residual(u, 1.5, 0.2) < 1e-5
    assert blowup_homogeneity_residual(u, 2.0, 0.2) > 0.1
