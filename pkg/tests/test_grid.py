from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from parasig.catalog import CatalogSolution
from parasig.grid import (
    DomainError,
    Grid,
    GridField,
    ParabolicPoint,
    PolyField,
    SubCylinder,
    apply_Z,
    parabolic_holder_seminorm,
    parabolic_norm,
)
from parasig.poly import PolySpec


def sampled(grid, fn, levels=3):
    ts = grid.times[-levels:]
    X = grid.coords
    vals = np.stack([fn(X, np.full(X.shape[:-1], t)) for t in ts])
    return GridField(grid, ts, vals)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(n=1)
    with pytest.raises(ValueError):
        Grid(n=2, h=0.3)
    g = Grid(n=2, h=1 / 8)
    assert g.dt == pytest.approx(1 / 128)
    assert g.shape == (17, 9)


def test_grid_text_roundtrip():
    g = Grid(n=3, h=1 / 4)
    assert Grid.from_text(g.to_text()) == g
    assert Grid.from_mapping({"n": "2", "h": "1/16"}).h == 1 / 16
    with pytest.raises(ValueError, match="unknown"):
        Grid.from_mapping({"n": 2, "mesh": 1})


def test_parabolic_norm():
    assert parabolic_norm(ParabolicPoint((3.0, 0.0), -16.0)) == pytest.approx(5.0)


@given(st.floats(-0.9, 0.9), st.floats(0.0, 0.9), st.floats(-0.9, -0.01))
def test_interpolation_exact_on_bilinear(x1, x2, t):
    # bilinear in space, linear in time: reproduced exactly by multilinear interpolation
    g = Grid(n=2, h=1 / 8)
    v = sampled(g, lambda X, T: 1 + X[..., 0] - 2 * X[..., 1] + 3 * X[..., 0] * X[..., 1] + 0 * T, levels=len(g.times))
    got = v(np.array([[x1, x2]]), np.array([t]))
    assert got[0] == pytest.approx(1 + x1 - 2 * x2 + 3 * x1 * x2, abs=1e-12)


def test_domain_error_outside():
    g = Grid(n=2, h=1 / 8)
    v = sampled(g, lambda X, T: X[..., 0])
    with pytest.raises(DomainError):
        v(np.array([[2.0, 0.0]]), np.array([0.0]))


def test_apply_Z_on_homogeneous_polynomial():
    p = PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,0 j=1 coeff=2")
    val = apply_Z(PolyField(p), ParabolicPoint((0.3, 0.2), -0.1))
    assert val == pytest.approx(2 * (0.09 - 0.2), rel=1e-6)


def test_holder_seminorm_scale_invariant_for_three_halves():
    # a 3/2-homogeneous field has the same 3/2 seminorm on every Q_r about the origin
    u = CatalogSolution("halfspace_32").field()
    a = parabolic_holder_seminorm(u, 1.5, SubCylinder((0.0, 0.0), 0.0, 0.25), seed=3)
    b = parabolic_holder_seminorm(u, 1.5, SubCylinder((0.0, 0.0), 0.0, 0.5), seed=3)
    assert a.value == pytest.approx(b.value, rel=1e-9)
    assert a.value > 0


def test_holder_seminorm_linear_field_has_no_spatial_part():
    u = PolyField(PolySpec.from_text("alpha=1,0 j=0 coeff=1"))
    rep = parabolic_holder_seminorm(u, 1.5, SubCylinder((0.0, 0.0), 0.0, 0.25))
    assert rep.spatial == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        parabolic_holder_seminorm(u, 2.5, SubCylinder((0.0, 0.0), 0.0, 0.25))


def test_field_csv(tmp_path):
    g = Grid(n=2, h=1 / 4)
    v = sampled(g, lambda X, T: X[..., 0] + T)
    path = v.to_csv(tmp_path / "v.csv")
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["x1", "x2", "t"]
    assert len(lines) == 1 + 3 * 9 * 5
