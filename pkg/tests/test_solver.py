from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parasig.catalog import CatalogSolution
from parasig.grid import Grid
from parasig.solver import (
    PenaltySpec,
    SignoriniProblem,
    beta_eps,
    beta_eps_prime,
    one_sided_flux,
    penalty_continuation,
    problem_from_field,
    solve_penalized,
    solve_projected,
    sup_difference,
    sup_error,
)


@pytest.fixture(scope="module")
def hs32_problem():
    return problem_from_field(Grid(n=2, h=1 / 16), CatalogSolution("halfspace_32").field(), "halfspace_32")


@pytest.fixture(scope="module")
def hs32_projected(hs32_problem):
    return solve_projected(hs32_problem)


def test_penalty_spec_validation():
    with pytest.raises(ValueError):
        PenaltySpec(0.0)


@given(st.floats(0.01, 0.5), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_beta_is_monotone(eps, a, b):
    spec = PenaltySpec(eps)
    lo, hi = min(a, b), max(a, b)
    assert beta_eps(np.array(lo), spec) <= beta_eps(np.array(hi), spec) + 1e-15


@pytest.mark.parametrize("eps", [0.1, 0.025])
def test_beta_branches_and_smoothness(eps):
    spec = PenaltySpec(eps)
    assert beta_eps(np.array(0.5), spec) == 0.0
    s = -3 * eps ** 2
    assert beta_eps(np.array(s), spec) == pytest.approx(eps + s / eps)
    # value and slope continuous at both knots
    for knot in (0.0, -2 * eps ** 2):
        d = 1e-9 * eps
        assert beta_eps(np.array(knot - d), spec) == pytest.approx(beta_eps(np.array(knot + d), spec), abs=1e-6)
        assert beta_eps_prime(np.array(knot - d), spec) == pytest.approx(beta_eps_prime(np.array(knot + d), spec),
                                                                           rel=1e-5, abs=1e-6)


def test_one_sided_flux_exact_on_quadratics():
    h = 0.1
    y = h * np.arange(3)
    vals = 2 + 3 * y - 5 * y ** 2
    assert one_sided_flux(vals, h) == pytest.approx(3.0)


def test_projected_reproduces_halfspace_32(hs32_projected):
    rep = hs32_projected
    assert sup_error(rep.field, CatalogSolution("halfspace_32").field()) < 5e-3
    assert rep.penetration <= 1e-12
    assert rep.residuals.complementarity < 1e-2


def test_penalized_penetration_scales_with_eps(hs32_problem):
    pens = [solve_penalized(hs32_problem, PenaltySpec(e)).penetration for e in (0.1, 0.05)]
    assert pens[1] < pens[0]
    assert pens[0] <= 2 * 0.1 and pens[1] <= 2 * 0.05


def test_penalized_approaches_projected(hs32_problem, hs32_projected):
    d = [sup_difference(hs32_projected.field, solve_penalized(hs32_problem, PenaltySpec(e)).field) for e in (0.1, 0.05)]
    assert d[1] < d[0]


def test_penalty_continuation_requires_decreasing_schedule(hs32_problem):
    with pytest.raises(ValueError):
        penalty_continuation(hs32_problem, [0.05, 0.1])


def test_strictly_positive_data_never_touches():
    # 3 + x1 + x1^2 + 2t is caloric, even in x_n and >= 0.75: the thin condition is pure Neumann
    exact = lambda x, t: 3 + x[..., 0] + x[..., 0] ** 2 + 2 * t  # noqa: E731
    prob = SignoriniProblem(Grid(n=2, h=1 / 8), g=exact)
    rep = solve_projected(prob)
    assert rep.min_gap > 0.5
    assert sup_error(rep.field, exact) < 1e-10
