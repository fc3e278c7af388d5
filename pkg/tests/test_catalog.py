from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from parasig.catalog import (
    KINDS,
    CatalogSolution,
    Cutoff,
    caloric_extend,
    check_catalog_solution,
    in_class_P,
    monneau_positive_polynomial,
    subtract_obstacle,
    suite_catalog,
    taylor_polynomial,
    timelike_polynomial,
)
from parasig.grid import PolyField
from parasig.poly import PolySpec


@pytest.mark.parametrize("sol", suite_catalog(), ids=lambda s: f"{s.kind}-m{s.m}")
def test_suite_members_pass_all_checks(sol):
    checks = check_catalog_solution(sol, samples=400, seed=1)
    bad = [c for c in checks if not c.passed]
    assert not bad, bad


def test_known_homogeneities():
    expected = {"halfspace_32": 1.5, "halfspace_2m_half": 3.5, "halfspace_2m": 4.0, "halfspace_2m1": 5.0,
                "timelike": 4.0, "taylor_cntrex": 2.0}
    for kind in KINDS:
        assert CatalogSolution(kind, m=2).kappa == expected[kind]


def test_halfspace_32_closed_form():
    # Re (x1 + i x2)^{3/2} on the upper half plane
    sol = CatalogSolution("halfspace_32")
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.3, 0.4]])
    z = x[:, 0] + 1j * x[:, 1]
    np.testing.assert_allclose(sol.value(x, np.zeros(4)), (z ** 1.5).real, atol=1e-14)


def test_taylor_counterexample_is_timelike_m1():
    tay = CatalogSolution("taylor_cntrex")
    assert tay.poly == timelike_polynomial(1)
    assert tay.poly == PolySpec.from_text("alpha=0,0 j=1 coeff=-1\nalpha=0,2 j=0 coeff=-1/2")
    assert CatalogSolution("halfspace_2m", m=1).poly is None


def test_symbolic_heat_residual_vanishes():
    for sol in suite_catalog():
        assert sp.simplify(sol.symbolic_heat_residual()) == 0


@pytest.mark.parametrize("m", [1, 2, 3])
def test_polynomial_families_in_class_P(m):
    for p in (timelike_polynomial(m), monneau_positive_polynomial(2, m), monneau_positive_polynomial(3, m)):
        ok, why = in_class_P(p, 2 * m)
        assert ok, why


def test_in_class_P_rejects():
    assert not in_class_P(PolySpec.from_text("alpha=2,0 j=0 coeff=1"), 2)[0]  # not caloric
    assert not in_class_P(PolySpec.from_text("alpha=2,0 j=0 coeff=-1\nalpha=0,2 j=0 coeff=1"), 2)[0]  # negative trace
    assert not in_class_P(PolySpec.from_text("alpha=1,1 j=0 coeff=1"), 2)[0]  # odd in x_n


thin_terms = st.dictionaries(
    st.tuples(st.tuples(st.integers(0, 6), st.just(0)), st.integers(0, 3)),
    st.fractions(min_value=-3, max_value=3, max_denominator=5),
    max_size=5,
)


@given(thin_terms)
def test_caloric_extend_properties(terms):
    q = PolySpec(2, terms)
    e = caloric_extend(q)
    assert e.is_caloric()
    assert e.is_even_in_xn()
    assert e.restrict_thin() == q


def test_caloric_extend_rejects_xn_dependence():
    with pytest.raises(ValueError):
        caloric_extend(PolySpec.x(2, 1))


def test_taylor_polynomial_truncates_by_parabolic_degree():
    phi = PolySpec.from_text("alpha=1,0 j=0 coeff=1\nalpha=2,0 j=1 coeff=1\nalpha=0,0 j=1 coeff=3")
    assert taylor_polynomial(phi, 2) == PolySpec.from_text("alpha=1,0 j=0 coeff=1\nalpha=0,0 j=1 coeff=3")


def test_subtract_obstacle_zero_obstacle_keeps_caloric_core():
    # with phi = 0 the subtraction is just the cutoff; f vanishes where the cutoff is 1
    p = PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,2 j=0 coeff=-1")
    sub = subtract_obstacle(PolyField(p), PolySpec.zero(2), 2)
    x = np.array([[0.1, 0.2], [0.3, 0.1]])
    t = np.array([-0.1, -0.2])
    np.testing.assert_allclose(sub.u(x, t), p.evaluate(x, t), atol=1e-14)
    np.testing.assert_allclose(sub.f(x, t), 0.0, atol=1e-12)
    assert sub.q_k.is_zero()


def test_cutoff_validation():
    with pytest.raises(ValueError):
        Cutoff(plateau=0.8, support=0.5)


def test_timelike_rejects_bad_parameters():
    with pytest.raises(ValueError):
        timelike_polynomial(0)
    with pytest.raises(ValueError):
        timelike_polynomial(1, C=Fraction(-1))
