from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from parasig.grid import DomainError
from parasig.poly import PolySpec
from parasig.whitney import (
    JetFamily,
    ParabolicCube,
    PartitionOfUnity,
    bump_1d,
    check_compatibility,
    difference_identity,
    finite_difference,
    jet_indices,
    nearest_base_points,
    partition_of_unity,
    whitney_decompose,
    whitney_extend,
)

BOX = ([-1.0, -1.0], [1.0, 1.0])
Q = PolySpec.from_text("alpha=2 j=0 coeff=1\nalpha=0 j=1 coeff=2\nalpha=1 j=0 coeff=-3\nalpha=0 j=0 coeff=1/2", 1)


@pytest.fixture(scope="module")
def origin_dec():
    return whitney_decompose(np.zeros((1, 2)), BOX, max_level=7)


def test_cube_geometry():
    q = ParabolicCube(1, (1, -1))
    np.testing.assert_allclose(q.lo, [0.5, -0.25])
    np.testing.assert_allclose(q.hi, [1.0, 0.0])
    kids = q.children()
    assert len(kids) == 2 * 4
    assert sum((c.volume() for c in kids), Fraction(0)) == q.volume()


def test_decomposition_exact_cover(origin_dec):
    dec = origin_dec
    assert dec.volume_defect() == 0
    keys = {(q.k, q.anchor) for q in dec.cubes + dec.unresolved}
    assert len(keys) == len(dec.cubes) + len(dec.unresolved)
    # unresolved cubes sit at the finest level and failed the distance test
    for q in dec.unresolved:
        lo, hi = q.lo, q.hi
        gap = np.maximum(np.maximum(lo, -hi), 0.0)
        assert q.k == 7
        assert np.sqrt(gap[0] ** 2 + gap[1]) < dec.A * q.side


def test_distance_comparison_for_every_cube(origin_dec):
    r = origin_dec.ratios
    assert np.all(r >= origin_dec.c_n - 1e-12)
    assert np.all(r <= origin_dec.C_n + 1e-12)


def test_decompose_guards():
    with pytest.raises(ValueError):
        whitney_decompose(np.zeros((0, 2)), BOX)
    with pytest.raises(ValueError):
        whitney_decompose(np.zeros((1, 2)), ([-0.3, -1.0], [1.0, 1.0]))


def test_bump_profile_and_derivative():
    z = np.linspace(-1.2, 1.2, 241)
    b = bump_1d(z, 0.5, 1.0)
    assert np.all(b[np.abs(z) <= 0.5] == 1.0) and np.all(b[np.abs(z) >= 1.0] == 0.0)
    assert np.all((b >= 0) & (b <= 1))
    zz = np.array([0.6, 0.75, -0.8])
    d = 1e-5
    fd = (bump_1d(zz + d, 0.5, 1.0) - bump_1d(zz - d, 0.5, 1.0)) / (2 * d)
    np.testing.assert_allclose(bump_1d(zz, 0.5, 1.0, 1), fd, rtol=1e-6, atol=1e-9)


def test_partition_of_unity_sums_to_one(origin_dec):
    pu = partition_of_unity(origin_dec)
    rng = np.random.default_rng(0)
    P = rng.uniform(-0.9, 0.9, (300, 2))
    P = P[np.sqrt(P[:, 0] ** 2 + np.abs(P[:, 1])) > 0.1]
    star = pu.derivatives(P, (2, 1))
    np.testing.assert_allclose(star[(0, 0)].sum(axis=1), 1.0, atol=1e-12)
    for g in [(1, 0), (2, 0), (0, 1), (1, 1)]:
        np.testing.assert_allclose(star[g].sum(axis=1), 0.0, atol=1e-8 * np.abs(star[g]).max())
    assert pu.overlap(P).max() <= 12


def test_partition_guards(origin_dec):
    with pytest.raises(ValueError):
        PartitionOfUnity(origin_dec.cubes, eps=0.75)
    pu = partition_of_unity(origin_dec)
    with pytest.raises(DomainError):
        pu.weights(np.array([[5.0, 5.0]]))


def test_jet_indices():
    assert len(jet_indices(1, 1)) == 4  # 1, x, x^2, t
    assert jet_indices(2, 1)[0] == ((0, 0), 0)


def test_polynomial_jets_compatible_and_difference_identity():
    E = np.array([[0.0, 0.0], [0.25, -0.0625], [-0.5, 0.25]])
    jets = JetFamily.from_polynomial(Q, E, 1, exact=True)
    assert check_compatibility(jets).ok
    assert difference_identity(jets, 0, 1)
    assert difference_identity(jets, 0, 2, (1,), 0)


def test_incompatible_jets_flagged_and_refused():
    # a jump between two nearby points does not decay like the far pairs
    E = np.array([[0.0, 0.0], [0.05, 0.0], [0.75, -0.25]])
    jets = JetFamily.from_polynomial(Q, E, 1)
    jets.values[((0,), 0)] = np.asarray(jets.values[((0,), 0)], dtype=float) + np.array([0.0, 0.01, 0.0])
    rep = check_compatibility(jets)
    assert not rep.ok and rep.flagged
    with pytest.raises(ValueError, match="compatib"):
        whitney_extend(jets, max_level=5)
    whitney_extend(jets, max_level=5, override=True)


def test_extension_reproduces_polynomial_and_derivatives():
    E = np.array([[0.0, 0.0], [0.25, -0.0625], [-0.5, 0.25]])
    F = whitney_extend(JetFamily.from_polynomial(Q, E, 1), box=BOX, max_level=6)
    rng = np.random.default_rng(1)
    P = rng.uniform(-0.9, 0.9, (200, 2))
    d = np.min(np.sqrt((P[:, None, 0] - E[None, :, 0]) ** 2 + np.abs(P[:, None, 1] - E[None, :, 1])), axis=1)
    P = P[d > 0.15][:40]
    np.testing.assert_allclose(F(P), Q.evaluate(P[:, :1], P[:, 1]), atol=1e-12)
    for g in [(1, 0), (2, 0), (0, 1)]:
        exact = Q.diff_multi(g[:1], g[1]).evaluate(P[:, :1], P[:, 1])
        np.testing.assert_allclose(F.derivative(g, P), exact, atol=1e-10)
        np.testing.assert_allclose(finite_difference(F, g, P[:4], 1e-3), exact[:4], atol=1e-6)
    # on E the extension returns the jets
    np.testing.assert_allclose(F(E), Q.evaluate(E[:, :1], E[:, 1]), atol=1e-15)


def test_tie_break_policies():
    # E symmetric about x = 1/8, the center of the level-2 cubes over [0, 1/4]
    E = np.array([[-0.375, 0.0], [0.625, 0.0]])
    dec = whitney_decompose(E, BOX, max_level=5)
    lo = nearest_base_points(dec, E, "lex")
    hi = nearest_base_points(dec, E, "lex_max")
    differ = lo != hi
    assert differ.any()
    for c in np.nonzero(differ)[0]:
        assert dec.cubes[c].center[0] == pytest.approx(0.125)
    # polynomial jets have identical Taylor data, so both policies give the same extension
    jets = JetFamily.from_polynomial(Q, E, 1)
    P = np.array([[0.0, 0.5], [0.01, -0.7], [-0.02, 0.3]])
    a = whitney_extend(jets, dec=dec, tie_break="lex")(P)
    b = whitney_extend(jets, dec=dec, tie_break="lex_max")(P)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_jet_csv_roundtrip(tmp_path):
    E = np.array([[0.0, 0.0], [0.25, -0.0625]])
    jets = JetFamily.from_polynomial(Q, E, 1)
    back = JetFamily.from_csv(jets.to_csv(tmp_path / "jets.csv"), 1)
    np.testing.assert_array_equal(back.points, jets.points)
    for k in jet_indices(1, 1):
        np.testing.assert_array_equal(np.asarray(back.values[k], float), np.asarray(jets.values[k], float))
