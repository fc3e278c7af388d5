from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parasig.poly import PolySpec, homogeneous_basis, multi_factorial

coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=7)


@st.composite
def polys(draw, n=2, max_deg=4):
    terms = {}
    for _ in range(draw(st.integers(0, 5))):
        alpha = tuple(draw(st.integers(0, max_deg)) for _ in range(n))
        j = draw(st.integers(0, 2))
        terms[(alpha, j)] = draw(coeffs)
    return PolySpec(n, terms)


def test_heat_of_fundamental_examples():
    x1 = PolySpec.x(2, 0)
    x2 = PolySpec.x(2, 1)
    t = PolySpec.t(2)
    assert (x1 * x1 - x2 * x2).is_caloric()
    assert (x1 * x1 + 2 * t).is_caloric()
    assert not (x1 * x1).is_caloric()
    assert (x1 * x1).heat() == PolySpec.constant(2, 2)


def test_degree_and_homogeneity():
    p = PolySpec.monomial(2, (2, 1), 1) + PolySpec.monomial(2, (5, 0), 0)
    assert p.degree() == 5
    assert p.homogeneity() == 5
    assert (p + PolySpec.constant(2, 1)).homogeneity() is None
    assert PolySpec.zero(2).degree() == -1


def test_text_roundtrip_and_errors():
    p = PolySpec.from_text("alpha=2,0 j=0 coeff=1/3\nalpha=0,0 j=1 coeff=-2")
    assert PolySpec.from_text(p.to_text()) == p
    with pytest.raises(ValueError, match="line 1"):
        PolySpec.from_text("alpha=1 coeff=2")


@given(polys(), polys())
def test_heat_is_linear(p, q):
    assert (p + q).heat() == p.heat() + q.heat()


@given(polys())
def test_text_roundtrip_property(p):
    assert PolySpec.from_text(p.to_text(), n=2) == p


@given(polys(), st.tuples(coeffs, coeffs), coeffs)
def test_substitute_shift_matches_evaluation(p, x0, t0):
    shifted = p.substitute_shift(x0, t0)
    x, t = (Fraction(1, 3), Fraction(-2, 5)), Fraction(-1, 7)
    assert shifted.evaluate_exact(x, t) == p.evaluate_exact((x[0] - x0[0], x[1] - x0[1]), t - t0)


@given(polys())
def test_float_evaluation_matches_exact(p):
    x = np.array([[0.3, -0.7], [1.1, 0.2]])
    t = np.array([-0.4, -0.05])
    exact = [float(p.evaluate_exact(tuple(Fraction(v) for v in xi), Fraction(ti))) for xi, ti in zip(x, t)]
    np.testing.assert_allclose(p.evaluate(x, t), exact, rtol=1e-12, atol=1e-12)


def test_homogeneous_basis_counts():
    # |alpha| + 2j = 4 in two variables, even in x_2
    keys = homogeneous_basis(2, 4, even_in_xn=True)
    assert sorted(keys) == sorted([((4, 0), 0), ((2, 2), 0), ((0, 4), 0), ((2, 0), 1), ((0, 2), 1), ((0, 0), 2)])
    assert multi_factorial((2, 3)) == 12
