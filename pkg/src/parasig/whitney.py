"""Parabolic Whitney cubes, partition of unity and jet extension."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from pathlib import Path

import numpy as np
import sympy as sp

from .grid import DomainError
from .poly import PolySpec, multi_factorial

# --------------------------------------------------------------------------
# cubes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParabolicCube:
    """``prod [a_i 2^-k, (a_i+1) 2^-k] x [b 4^-k, (b+1) 4^-k]``."""

    k: int
    anchor: tuple[int, ...]  # (a_1, ..., a_n, b)

    @property
    def n(self) -> int:
        return len(self.anchor) - 1

    @property
    def side(self) -> float:
        return 2.0 ** (-self.k)

    @property
    def sizes(self) -> np.ndarray:
        s = self.side
        return np.array([s] * self.n + [s * s])

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.anchor, dtype=float) * self.sizes

    @property
    def hi(self) -> np.ndarray:
        return self.lo + self.sizes

    @property
    def center(self) -> np.ndarray:
        return self.lo + 0.5 * self.sizes

    def volume(self) -> Fraction:
        return Fraction(1, 2 ** (self.k * (self.n + 2))) if self.k >= 0 else Fraction(2 ** (-self.k * (self.n + 2)))

    def children(self) -> list[ParabolicCube]:
        out = []
        for off in product(*([range(2)] * self.n + [range(4)])):
            out.append(ParabolicCube(self.k + 1, tuple(2 * a + o for a, o in zip(self.anchor[:-1], off[:-1]))
                                     + (4 * self.anchor[-1] + off[-1],)))
        return out


def _box_dist(lo, hi, elo, ehi) -> np.ndarray:
    """Parabolic distance between the box ``[lo, hi]`` and boxes ``[elo, ehi]`` (rows)."""
    gap = np.maximum(np.maximum(elo - hi, lo - ehi), 0.0)
    return np.sqrt(np.sum(gap[..., :-1] ** 2, axis=-1) + gap[..., -1])


def _as_boxes(E) -> tuple[np.ndarray, np.ndarray]:
    """Points ``(N, n+1)`` or boxes ``(N, 2, n+1)`` to ``(lo, hi)`` arrays."""
    E = np.asarray(E, dtype=float)
    if E.size == 0:
        raise ValueError("E is empty")
    if E.ndim == 2:
        return E, E
    if E.ndim == 3 and E.shape[1] == 2:
        return E[:, 0], E[:, 1]
    raise ValueError("E must be points (N, n+1) or boxes (N, 2, n+1)")


@dataclass
class WhitneyDecomposition:
    cubes: list[ParabolicCube]
    unresolved: list[ParabolicCube]
    dist: np.ndarray  # dist_p(Q_i, E) per accepted cube
    A: float
    box: tuple[np.ndarray, np.ndarray]
    k0: int

    @property
    def ratios(self) -> np.ndarray:
        return self.dist / np.array([q.side for q in self.cubes])

    @property
    def c_n(self) -> float:
        return self.A

    @property
    def C_n(self) -> float:
        """Upper comparison constant guaranteed by the construction."""
        n = self.cubes[0].n if self.cubes else 1
        return 2 * self.A + 2 * math.sqrt(n + 1)

    def box_volume(self) -> Fraction:
        lo, hi = self.box
        v = Fraction(1)
        for a, b in zip(lo, hi):
            v *= Fraction(b) - Fraction(a)
        return v

    def volume_defect(self) -> Fraction:
        """``vol(box) - sum vol(accepted) - sum vol(unresolved)`` (exactly zero)."""
        return self.box_volume() - sum((q.volume() for q in self.cubes), Fraction(0)) - sum(
            (q.volume() for q in self.unresolved), Fraction(0))

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = self.cubes[0].n if self.cubes else 0
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level"] + [f"a{i + 1}" for i in range(n)] + ["b", "dist_ratio"])
            for q, r in zip(self.cubes, self.ratios):
                w.writerow([q.k, *q.anchor, repr(float(r))])
        return path


def whitney_decompose(E, box, k0: int = 0, max_level: int = 8, A: float | None = None,
                      max_cubes: int = 500_000) -> WhitneyDecomposition:
    """Dyadic parabolic cubes covering ``box`` minus a neighborhood of ``E``.

    Starting from the level-``k0`` tiling of ``box``, a cube is accepted when
    ``dist_p(Q, E) >= A l(Q)`` and split into ``2^n * 4`` children otherwise.
    Cubes still rejected at ``max_level`` are returned as ``unresolved``.
    ``A`` defaults to the parabolic diameter ratio ``sqrt(n + 1)``.
    """
    elo, ehi = _as_boxes(E)
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    d = len(lo)
    if elo.shape[1] != d:
        raise ValueError("E and box dimensions differ")
    n = d - 1
    A = math.sqrt(n + 1) if A is None else float(A)
    sizes = np.array([2.0 ** -k0] * n + [4.0 ** -k0])
    a_lo = lo / sizes
    a_hi = hi / sizes
    if not (np.allclose(a_lo, np.round(a_lo), atol=1e-12) and np.allclose(a_hi, np.round(a_hi), atol=1e-12)):
        raise ValueError(f"box is not aligned with the level-{k0} dyadic grid")
    ranges = [range(int(round(a)), int(round(b))) for a, b in zip(a_lo, a_hi)]
    stack = [ParabolicCube(k0, tuple(a)) for a in product(*ranges)]
    accepted, dists, unresolved = [], [], []
    while stack:
        q = stack.pop()
        dist = float(np.min(_box_dist(q.lo, q.hi, elo, ehi)))
        if dist >= A * q.side:
            accepted.append(q)
            dists.append(dist)
        elif q.k >= max_level:
            unresolved.append(q)
        else:
            stack.extend(q.children())
        if len(accepted) + len(stack) > max_cubes:
            raise ValueError("cube budget exceeded; lower max_level")
    order = sorted(range(len(accepted)), key=lambda i: (accepted[i].k, accepted[i].anchor))
    return WhitneyDecomposition([accepted[i] for i in order], sorted(unresolved, key=lambda q: (q.k, q.anchor)),
                                np.array([dists[i] for i in order]), A, (lo, hi), k0)


# --------------------------------------------------------------------------
# bumps and partition of unity
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _step_derivatives(order: int):
    """Lambdified derivatives of ``S(s) = e(s) / (e(s) + e(1-s))``, ``e(s) = exp(-1/s)``."""
    s = sp.Symbol("s")
    e = lambda z: sp.exp(-1 / z)  # noqa: E731
    S = e(s) / (e(s) + e(1 - s))
    fns = []
    expr = S
    for _ in range(order + 1):
        fns.append(sp.lambdify(s, expr, "numpy", cse=True))
        expr = sp.diff(expr, s)
    return fns


def bump_1d(z, a: float, c: float, order: int = 0) -> np.ndarray:
    """Even bump: 1 on ``|z| <= a``, 0 on ``|z| >= c``, smooth in between."""
    z = np.asarray(z, dtype=float)
    tau = (c - np.abs(z)) / (c - a)
    out = np.zeros_like(tau)
    if order == 0:
        out[tau >= 1] = 1.0
    mid = (tau > 1e-3) & (tau < 1 - 1e-3)
    if np.any(mid):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            val = _step_derivatives(order)[order](tau[mid])
        val = np.nan_to_num(val, nan=0.0, posinf=0.0, neginf=0.0)
        sign = (-np.sign(z[mid])) ** order
        out[mid] = val * sign / (c - a) ** order
    # near the ends the step is flat to all orders
    if order == 0:
        out[(tau >= 1 - 1e-3) & (tau < 1)] = 1.0
    return out


def _multi_indices(target: tuple[int, ...]) -> list[tuple[int, ...]]:
    return sorted(product(*[range(k + 1) for k in target]), key=lambda g: (sum(g), g))


def _binom(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    return math.prod(math.comb(x, y) for x, y in zip(a, b))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


class PartitionOfUnity:
    """``phi_i^* = phi_i / sum_k phi_k`` with tensor-product bumps on dilated cubes."""

    def __init__(self, cubes: list[ParabolicCube], eps: float = 0.25):
        if not 0 < eps <= 0.5:
            raise ValueError(f"eps_dilation={eps} outside (0, 1/2]; overlap is not controlled")
        if not cubes:
            raise ValueError("no cubes")
        self.cubes = cubes
        self.eps = eps
        self.n = cubes[0].n
        self.centers = np.array([q.center for q in cubes])
        self.sides = np.array([q.side for q in cubes])
        s = self.sides[:, None]
        self.scale = np.concatenate([np.repeat(s, self.n, axis=1), s * s], axis=1)
        # plateau and support half-widths in the normalized variables
        lam = 1 + eps
        self.a = np.array([0.5] * self.n + [0.5])
        self.c = np.array([lam / 2] * self.n + [lam * lam / 2])

    def _local(self, P: np.ndarray):
        Z = (P[:, None, :] - self.centers[None, :, :]) / self.scale[None, :, :]
        inside = np.all(np.abs(Z) < self.c[None, None, :], axis=-1)
        return Z, inside

    def bump_derivative(self, P: np.ndarray, gamma: tuple[int, ...], Z=None, inside=None) -> np.ndarray:
        """``d^gamma phi_i`` at points ``P`` (rows ``(x, t)``), shape ``(points, cubes)``."""
        if Z is None:
            Z, inside = self._local(P)
        out = np.where(inside, 1.0, 0.0)
        for d, g in enumerate(gamma):
            bd = np.zeros_like(out)
            bd[inside] = bump_1d(Z[..., d][inside], self.a[d], self.c[d], g)
            out = out * bd / self.scale[None, :, d] ** g
        return out

    def overlap(self, P: np.ndarray) -> np.ndarray:
        """Number of dilated cubes containing each point."""
        return self._local(P)[1].sum(axis=1)

    def derivatives(self, P: np.ndarray, target: tuple[int, ...]) -> dict:
        """``{gamma: d^gamma phi^*}`` for all ``gamma <= target`` componentwise."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        Z, inside = self._local(P)
        if np.any(~inside.any(axis=1)):
            raise DomainError("point not covered by any dilated cube")
        idx = _multi_indices(target)
        phi = {g: self.bump_derivative(P, g, Z, inside) for g in idx}
        Phi = {g: phi[g].sum(axis=1) for g in idx}
        zero = idx[0]
        if np.any(Phi[zero] <= 0):
            raise DomainError("partition sum vanishes; point lies outside the cube plateaus")
        inv = {}
        for g in idx:
            acc = np.zeros_like(Phi[zero]) if g != zero else np.ones_like(Phi[zero])
            for e in idx:
                if e == g or any(a > b for a, b in zip(e, g)):
                    continue
                acc = acc - _binom(g, e) * Phi[_sub(g, e)] * inv[e]
            inv[g] = acc / Phi[zero]
        star = {}
        for g in idx:
            acc = np.zeros_like(phi[zero])
            for e in idx:
                if any(a > b for a, b in zip(e, g)):
                    continue
                acc = acc + _binom(g, e) * phi[_sub(g, e)] * inv[e][:, None]
            star[g] = acc
        return star

    def weights(self, P: np.ndarray) -> np.ndarray:
        return self.derivatives(P, (0,) * (self.n + 1))[(0,) * (self.n + 1)]


def partition_of_unity(cubes, eps: float = 0.25) -> PartitionOfUnity:
    return PartitionOfUnity(list(cubes.cubes if isinstance(cubes, WhitneyDecomposition) else cubes), eps)


# --------------------------------------------------------------------------
# jets
# --------------------------------------------------------------------------


def jet_indices(n: int, m: int) -> list[tuple[tuple[int, ...], int]]:
    """All ``(alpha, j)`` with ``|alpha| + 2 j <= 2 m``."""
    out = []
    for j in range(m + 1):
        for alpha in product(range(2 * m + 1), repeat=n):
            if sum(alpha) + 2 * j <= 2 * m:
                out.append((tuple(alpha), j))
    return sorted(out, key=lambda k: (sum(k[0]) + 2 * k[1], k))


@dataclass
class JetFamily:
    """Values ``f_{alpha,j}`` at the rows ``(x, t)`` of ``points``."""

    points: np.ndarray
    m: int
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(self.points) == 0:
            raise ValueError("jet family needs at least one point")
        missing = [k for k in jet_indices(self.n, self.m) if k not in self.values]
        if missing:
            raise ValueError(f"incomplete jet index set; missing {missing[:3]}")
        self.values = {k: np.asarray(v) for k, v in self.values.items()}

    @property
    def n(self) -> int:
        return self.points.shape[1] - 1

    @property
    def exact(self) -> bool:
        return all(v.dtype == object for v in self.values.values())

    @classmethod
    def from_polynomial(cls, q: PolySpec, points, m: int, exact: bool = False) -> JetFamily:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = {}
        for alpha, j in jet_indices(q.n, m):
            d = q.diff_multi(alpha, j)
            if exact:
                vals[(alpha, j)] = np.array([d.evaluate_exact([Fraction(c) for c in p[:-1]], Fraction(p[-1])) for p in pts],
                                            dtype=object)
            else:
                vals[(alpha, j)] = d.evaluate(pts[:, :-1], pts[:, -1])
        return cls(pts, m, vals)

    @classmethod
    def from_callable(cls, fn, points, m: int) -> JetFamily:
        """``fn(alpha, j, x, t)`` returns the derivative values at the given rows."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = pts.shape[1] - 1
        vals = {(a, j): np.asarray(fn(a, j, pts[:, :-1], pts[:, -1]), dtype=float) for a, j in jet_indices(n, m)}
        return cls(pts, m, vals)

    def taylor(self, i: int, alpha=None, j: int = 0) -> PolySpec:
        """``P_{alpha,j}(.; p_i)`` as an exact polynomial (float data is converted exactly)."""
        n, m = self.n, self.m
        alpha = (0,) * n if alpha is None else tuple(alpha)
        order = 2 * self.m - sum(alpha) - 2 * j
        terms = {}
        for beta, k in jet_indices(n, m):
            if sum(beta) + 2 * k > order:
                continue
            c = self.values[(tuple(a + b for a, b in zip(alpha, beta)), j + k)][i]
            terms[(beta, k)] = Fraction(c) / (multi_factorial(beta) * math.factorial(k))
        p = PolySpec(n, terms)
        x0 = [Fraction(float(v)) for v in self.points[i, :-1]]
        return p.substitute_shift(x0, Fraction(float(self.points[i, -1])))

    def taylor_eval(self, i: int, X: np.ndarray, gamma: tuple[int, ...] | None = None) -> np.ndarray:
        """Float evaluation of ``d^gamma P(.; p_i)`` at rows ``X``; ``gamma = alpha + (j,)``."""
        n = self.n
        gamma = (0,) * (n + 1) if gamma is None else tuple(gamma)
        alpha, j = gamma[:-1], gamma[-1]
        order = 2 * self.m - sum(alpha) - 2 * j
        D = X - self.points[i]
        out = np.zeros(len(X))
        if order < 0:
            return out
        for beta, k in jet_indices(n, self.m):
            if sum(beta) + 2 * k > order:
                continue
            c = float(self.values[(tuple(a + b for a, b in zip(alpha, beta)), j + k)][i])
            if c == 0:
                continue
            term = np.full(len(X), c / (multi_factorial(beta) * math.factorial(k)))
            for d, b in enumerate(beta):
                for _ in range(b):
                    term = term * D[:, d]
            for _ in range(k):
                term = term * D[:, -1]
            out += term
        return out

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = self.n
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)] + ["t"] + [f"alpha{i + 1}" for i in range(n)] + ["j", "value"])
            for i, p in enumerate(self.points):
                for (alpha, j), vals in self.values.items():
                    w.writerow([repr(float(c)) for c in p] + list(alpha) + [j, str(vals[i]) if self.exact else repr(float(vals[i]))])
        return path

    @classmethod
    def from_csv(cls, path, m: int) -> JetFamily:
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        n = sum(1 for h in header if h.startswith("x"))
        pts, index, vals = [], {}, {}
        for row in body:
            p = tuple(float(v) for v in row[: n + 1])
            if p not in index:
                index[p] = len(pts)
                pts.append(p)
            key = (tuple(int(v) for v in row[n + 1: 2 * n + 1]), int(row[2 * n + 1]))
            vals.setdefault(key, {})[index[p]] = row[2 * n + 2]
        exact = any("/" in v for d in vals.values() for v in d.values())
        conv = Fraction if exact else float
        arrays = {k: np.array([conv(d[i]) for i in range(len(pts))], dtype=object if exact else float) for k, d in vals.items()}
        return cls(np.array(pts), m, arrays)


@dataclass
class CompatibilityReport:
    remainders: dict  # (alpha, j) -> (N, N) array, R(p_a; p_b)
    constants: dict  # (alpha, j) -> smallest c with |R| <= c ||.||^(2m - |alpha| - 2j)
    flagged: list  # (a, b, alpha, j)
    distances: np.ndarray

    @property
    def ok(self) -> bool:
        return not self.flagged


def check_compatibility(jets: JetFamily, atol: float = 1e-10) -> CompatibilityReport:
    """Remainders ``R_{alpha,j}(p_a; p_b) = f_{alpha,j}(p_a) - P_{alpha,j}(p_a; p_b)`` for all ordered pairs.

    A pair is flagged when its normalized remainder is above ``atol`` and
    exceeds every normalized remainder of the same index among pairs at
    least twice as far apart, i.e. it fails to decay as the distance shrinks.
    """
    P = jets.points
    N = len(P)
    D = P[:, None, :] - P[None, :, :]
    dist = np.sqrt(np.sum(D[..., :-1] ** 2, axis=-1) + np.abs(D[..., -1]))
    scale = 1.0 + max(float(np.max(np.abs(np.asarray(v, dtype=float)))) for v in jets.values.values())
    rem, const, flagged = {}, {}, []
    off = ~np.eye(N, dtype=bool)
    for alpha, j in jet_indices(jets.n, jets.m):
        gamma = tuple(alpha) + (j,)
        R = np.zeros((N, N))
        for b in range(N):
            R[:, b] = np.asarray(jets.values[(alpha, j)], dtype=float) - jets.taylor_eval(b, P, gamma)
        R[~off] = 0.0
        order = 2 * jets.m - sum(alpha) - 2 * j
        with np.errstate(divide="ignore", invalid="ignore"):
            norm = np.where(off, np.abs(R) / dist ** order, 0.0)
        rem[(alpha, j)] = R
        const[(alpha, j)] = float(norm[off].max()) if N > 1 else 0.0
        for a, b in zip(*np.nonzero(off)):
            if abs(R[a, b]) <= atol * scale:
                continue
            far = off & (dist >= 2 * dist[a, b])
            if np.any(far) and norm[a, b] > norm[far].max():
                flagged.append((int(a), int(b), alpha, j))
    return CompatibilityReport(rem, const, flagged, dist)


def difference_identity(jets: JetFamily, i0: int, i1: int, alpha=None, j: int = 0) -> bool:
    """Exact check of ``P_{alpha,j}(.; p1) - P_{alpha,j}(.; p0) = sum R_{alpha+beta,j+k}(p1; p0) (x-x1)^beta (t-t1)^k / (beta! k!)``.

    The sum runs over ``|beta| + 2k <= 2m - |alpha| - 2j``.
    """
    n, m = jets.n, jets.m
    alpha = (0,) * n if alpha is None else tuple(alpha)
    lhs = jets.taylor(i1, alpha, j) - jets.taylor(i0, alpha, j)
    x1 = [Fraction(float(v)) for v in jets.points[i1, :-1]]
    t1 = Fraction(float(jets.points[i1, -1]))
    order = 2 * m - sum(alpha) - 2 * j
    rhs = PolySpec.zero(n)
    for beta, k in jet_indices(n, m):
        if sum(beta) + 2 * k > order:
            continue
        ab = tuple(a + b for a, b in zip(alpha, beta))
        R = Fraction(jets.values[(ab, j + k)][i1]) - jets.taylor(i0, ab, j + k).evaluate_exact(x1, t1)
        mono = PolySpec.monomial(n, beta, k, R / (multi_factorial(beta) * math.factorial(k)))
        rhs = rhs + mono.substitute_shift(x1, t1)
    return lhs == rhs


# --------------------------------------------------------------------------
# extension
# --------------------------------------------------------------------------


def nearest_base_points(dec: WhitneyDecomposition, E: np.ndarray, tie_break: str = "lex") -> np.ndarray:
    """Index into ``E`` of a point realizing ``dist_p(Q_i, E)`` for each cube.

    Ties (relative 1e-12) go to the lexicographically smallest point, or the
    largest with ``tie_break="lex_max"``.
    """
    E = np.asarray(E, dtype=float)
    order = np.lexsort(E.T[::-1])
    if tie_break == "lex_max":
        order = order[::-1]
    elif tie_break != "lex":
        raise ValueError(f"unknown tie_break {tie_break!r}")
    out = np.empty(len(dec.cubes), dtype=int)
    for c, q in enumerate(dec.cubes):
        d = _box_dist(q.lo, q.hi, E, E)
        dmin = d.min()
        ties = d[order] <= dmin * (1 + 1e-12) + 1e-300
        out[c] = order[np.argmax(ties)]
    return out


class WhitneyExtension:
    """``F = sum_i P(.; y_i) phi_i^*`` off ``E`` and ``F = f`` on ``E``."""

    def __init__(self, jets: JetFamily, dec: WhitneyDecomposition, eps: float = 0.25, tie_break: str = "lex"):
        self.jets = jets
        self.dec = dec
        self.pu = PartitionOfUnity(dec.cubes, eps)
        self.base = nearest_base_points(dec, jets.points, tie_break)

    def _on_E(self, P):
        d = np.abs(P[:, None, :] - self.jets.points[None, :, :]).max(axis=-1)
        hit = d <= 1e-14
        return hit.any(axis=1), hit.argmax(axis=1)

    def derivative(self, gamma, P) -> np.ndarray:
        """``d^gamma F`` at rows ``P``; ``gamma = alpha + (j,)``. On ``E`` returns the jet."""
        P = np.atleast_2d(np.asarray(P, dtype=float))
        gamma = tuple(gamma)
        out = np.empty(len(P))
        onE, which = self._on_E(P)
        if np.any(onE):
            alpha, j = gamma[:-1], gamma[-1]
            if sum(alpha) + 2 * j > 2 * self.jets.m:
                raise ValueError("derivative order exceeds the jet order")
            out[onE] = np.asarray(self.jets.values[(alpha, j)], dtype=float)[which[onE]]
        off = ~onE
        if np.any(off):
            Q = P[off]
            star = self.pu.derivatives(Q, gamma)
            acc = np.zeros(len(Q))
            used = np.nonzero(np.any(star[(0,) * len(gamma)] != 0, axis=0))[0]
            for g, w in star.items():
                coef = _binom(gamma, g)
                wg = w[:, used]
                for c_local, c in enumerate(used):
                    col = wg[:, c_local]
                    nz = col != 0
                    if np.any(nz):
                        acc[nz] += coef * col[nz] * self.jets.taylor_eval(self.base[c], Q[nz], _sub(gamma, g))
            out[off] = acc
        return out

    def __call__(self, P) -> np.ndarray:
        return self.derivative((0,) * (self.jets.n + 1), P)


def whitney_extend(jets: JetFamily, eps: float = 0.25, box=None, k0: int = 0, max_level: int = 8,
                   tie_break: str = "lex", override: bool = False, dec: WhitneyDecomposition | None = None) -> WhitneyExtension:
    """Extension operator for a compatible jet family.

    ``box`` defaults to the level-``k0`` dyadic box around the points with
    one cube of margin.
    """
    if not override:
        rep = check_compatibility(jets)
        if not rep.ok:
            raise ValueError(f"jets fail compatibility on {len(rep.flagged)} pairs; pass override=True to extend anyway")
    if dec is None:
        if box is None:
            n = jets.n
            sizes = np.array([2.0 ** -k0] * n + [4.0 ** -k0])
            lo = (np.floor(jets.points.min(axis=0) / sizes) - 1) * sizes
            hi = (np.ceil(jets.points.max(axis=0) / sizes) + 1) * sizes
            box = (lo, hi)
        dec = whitney_decompose(jets.points, box, k0=k0, max_level=max_level)
    return WhitneyExtension(jets, dec, eps, tie_break)


def finite_difference(F, gamma, P, h: float = 1e-3, order: int = 4) -> np.ndarray:
    """Tensor-product central differences of ``F`` for the mixed derivative ``gamma``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    stencils = []
    for g in gamma:
        if g == 0:
            stencils.append([(0, 1.0)])
            continue
        half = (g + order - 1) // 2
        offs = np.arange(-half, half + 1)
        V = np.vander(offs, increasing=True).T.astype(float)
        rhs = np.zeros(len(offs))
        rhs[g] = math.factorial(g)
        w = np.linalg.solve(V, rhs)
        stencils.append([(int(o), float(c)) for o, c in zip(offs, w) if abs(c) > 1e-14])
    acc = np.zeros(len(P))
    for combo in product(*stencils):
        shift = np.array([o for o, _ in combo], dtype=float) * h
        acc += math.prod(c for _, c in combo) * F(P + shift)
    return acc / h ** sum(gamma)
