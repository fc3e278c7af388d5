"""Free boundary extraction, frequency-based classification and blowup fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np
import sympy as sp

from .catalog import Cutoff, ObstacleSubtraction, in_class_P, subtract_obstacle, timelike_polynomial
from .functionals import (
    DEFAULT_QUAD,
    DegenerateField,
    QuadSpec,
    TruncationSpec,
    H_only,
    _strip_points,
    frequency_profile,
    log_r_grid,
    monneau,
)
from .grid import DomainError, Field, GridField, ScaledField, ShiftedField
from .poly import PolySpec, homogeneous_basis
from .solver import SignoriniProblem, one_sided_flux


# --------------------------------------------------------------------------
# free boundary sets
# --------------------------------------------------------------------------


def default_tolerances(h: float) -> tuple[float, float]:
    """``tol_c = max(1e-10, h^(3/2)/2)``, ``tol_g = 5 h``."""
    return max(1e-10, 0.5 * h ** 1.5), 5.0 * h


@dataclass
class FreeBoundarySets:
    """Boolean masks over ``(stored level, thin node)``.

    ``thin_x`` holds the tangential coordinates of the thin nodes (lateral
    edge nodes excluded), flattened; masks have shape ``(levels, nodes)``.
    """

    times: np.ndarray
    thin_x: np.ndarray
    contact: np.ndarray
    gamma: np.ndarray
    gamma_star: np.ndarray
    gap: np.ndarray
    flux: np.ndarray
    tol_c: float
    tol_g: float

    def points(self, which: str = "gamma_star", level: int = -1) -> np.ndarray:
        mask = getattr(self, which)[level]
        return self.thin_x[mask]

    def counts(self) -> dict:
        return {k: int(getattr(self, k).sum()) for k in ("contact", "gamma", "gamma_star")}


def _neighbor_shifts(n_tan: int):
    for d in range(n_tan):
        for s in (-1, 1):
            yield d, s


def _shift(a: np.ndarray, d: int, s: int, fill) -> np.ndarray:
    """``out[i] = a[i + s]`` along spatial axis ``d`` (axis 0 is the level)."""
    out = np.full_like(a, fill)
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    ax = d + 1
    if s > 0:
        src[ax], dst[ax] = slice(s, None), slice(None, -s)
    else:
        src[ax], dst[ax] = slice(None, s), slice(-s, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def extract_free_boundary(v: GridField, prob: SignoriniProblem, tol_c: float | None = None,
                          tol_g: float | None = None, time_window: float | None = None) -> FreeBoundarySets:
    """Contact set, free boundary and extended free boundary on the thin grid.

    ``Gamma``: contact nodes with a non-contact neighbor among the adjacent
    thin nodes or the stored levels within ``time_window`` (default
    ``(3h)^2``) before. ``Gamma_*`` adds contact nodes whose one-sided flux
    satisfies ``|d_n v| <= tol_g`` and is a local minimum of ``|d_n v|``
    over adjacent thin nodes, with some neighbor strictly larger.
    """
    grid = v.grid
    h = grid.h
    dc, dg = default_tolerances(h)
    tol_c = dc if tol_c is None else tol_c
    tol_g = dg if tol_g is None else tol_g
    tw = 9 * h * h if time_window is None else time_window
    inner = (slice(1, -1),) * (grid.n - 1)
    xt = grid.coords[..., 0, :][inner]
    tan_shape = xt.shape[:-1]
    L = len(v.times)
    gap = np.empty((L,) + tan_shape)
    flux = np.empty((L,) + tan_shape)
    for k, t in enumerate(v.times):
        vals = v.values[k]
        gap[k] = vals[..., 0][inner] - np.asarray(prob.phi(xt, t), dtype=float)
        flux[k] = one_sided_flux(vals, h)[inner]
    contact = gap <= tol_c
    gamma = np.zeros_like(contact)
    for d, s in _neighbor_shifts(grid.n - 1):
        nb = _shift(contact, d, s, True)  # missing neighbors are ignored
        gamma |= contact & ~nb
    for k in range(L):
        back = (v.times < v.times[k]) & (v.times >= v.times[k] - tw - 1e-14)
        if np.any(back):
            gamma[k] |= contact[k] & np.any(~contact[back], axis=0)
    af = np.abs(flux)
    small = contact & (af <= tol_g)
    is_min = np.ones_like(small)
    larger = np.zeros_like(small)
    for d, s in _neighbor_shifts(grid.n - 1):
        nb = _shift(af, d, s, np.nan)
        valid = ~np.isnan(nb)
        is_min &= ~valid | (af <= nb)
        larger |= valid & (nb > af + 1e-3 * tol_g)
    gamma_star = gamma | (small & is_min & larger)
    flat = (L, -1)
    return FreeBoundarySets(
        v.times.copy(), xt[..., :-1].reshape(-1, grid.n - 1), contact.reshape(flat), gamma.reshape(flat),
        gamma_star.reshape(flat), gap.reshape(flat), flux.reshape(flat), tol_c, tol_g,
    )


def contact_density(fb: FreeBoundarySets, center, t0: float, r: float, resolved: bool = True) -> float:
    """Fraction of ``Q'_r(center, t0)`` covered by contact nodes.

    Levels are weighted by the time span they represent. With ``resolved``
    the free boundary layer ``Gamma`` is removed from the contact set.
    """
    x0 = np.asarray(center, dtype=float)[: fb.thin_x.shape[1]]
    inball = np.linalg.norm(fb.thin_x - x0, axis=-1) < r + 1e-12
    lv = np.nonzero((fb.times <= t0 + 1e-14) & (fb.times > t0 - r * r - 1e-14))[0]
    if len(lv) == 0 or not np.any(inball):
        return 0.0
    t = fb.times
    prev = np.array([t[k - 1] if k > 0 else t[k] for k in lv])
    w = np.maximum(t[lv] - np.maximum(prev, t0 - r * r), 0.0)
    if w.sum() == 0:
        w = np.ones(len(lv))
    c = fb.contact[lv][:, inball]
    if resolved:
        c = c & ~fb.gamma[lv][:, inball]
    return float(np.sum(w * c.mean(axis=1)) / w.sum())


# --------------------------------------------------------------------------
# rescalings and kappa
# --------------------------------------------------------------------------


def rescale(u: Field, center, r: float, mode: str = "H_norm", kappa: float | None = None,
            t0: float = 0.0, quad: QuadSpec = DEFAULT_QUAD) -> Field:
    """``u(x0 + r x, t0 + r^2 t)`` normalized by ``H(r)^(1/2)`` or by ``r^kappa``."""
    base = ShiftedField(u, center, t0) if center is not None else u
    if mode == "H_norm":
        Hr = H_only(base, r, 0.0, quad)
        if Hr <= 0:
            raise DegenerateField("H(r) = 0")
        out = ScaledField(base, r, math.sqrt(Hr))
    elif mode == "kappa_hom":
        if kappa is None:
            raise ValueError("kappa_hom needs kappa")
        out = ScaledField(base, r, r ** kappa)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    x, t, _ = _strip_points(out, 1.0, 0.0, quad)
    if not np.all(out.contains(x, t)):
        raise DomainError(f"rescaling window r={r} exceeds the domain")
    return out


def reliable_window(h: float, u: Field | None = None, cutoff: Cutoff | None = None) -> tuple[float, float]:
    """``[4h, 8h]``, capped at ``plateau / 6`` when a cutoff is present."""
    lo, hi = 4 * h, 8 * h
    if cutoff is not None:
        hi = min(hi, cutoff.plateau / 6)
    return lo, max(hi, lo)


@dataclass
class KappaEstimate:
    kappa_hat: float
    slope_kappa: float
    r: np.ndarray
    N: np.ndarray
    H: np.ndarray
    branch: np.ndarray


def estimate_kappa(u: Field, trunc: TruncationSpec, h: float, center=None, t0: float = 0.0,
                   cutoff: Cutoff | None = None, quad: QuadSpec = DEFAULT_QUAD, per_decade: int = 64) -> KappaEstimate:
    """Truncated homogeneity from the frequency on the reliable window.

    The exponential ``C``-terms are removed from ``Phi`` and the remaining
    ``(1/2) d log max{H, mu} / d log r`` is extrapolated linearly in ``r`` to
    ``r = 0``. ``slope_kappa`` is half the log-log slope of ``H``.
    """
    base = ShiftedField(u, center, t0) if center is not None else u
    lo, hi = reliable_window(h, base, cutoff)
    r = log_r_grid(lo, hi, per_decade)
    if len(r) < 2:
        r = np.array([lo, lo * 10 ** (1 / per_decade)])
    prof = frequency_profile(base, trunc, r, delta=0.0, quad=quad, per_decade=per_decade)
    if np.any(prof.H <= 0) and trunc.M == 0:
        raise DegenerateField("H vanishes on the estimation window")
    ex = np.exp(trunc.C * r ** trunc.sigma)
    N = (prof.Phi - 2 * (ex - 1)) / ex
    A = np.stack([np.ones_like(r), r], axis=-1)
    coef = np.linalg.lstsq(A, N, rcond=None)[0]
    H = prof.H
    slope = 0.5 * np.polyfit(np.log(r), np.log(np.maximum(H, 1e-300)), 1)[0]
    return KappaEstimate(float(coef[0]), float(slope), r, N, H, prof.branch)


@dataclass
class Thresholds:
    band: float = 0.15
    forbidden: tuple[float, float] = (1.65, 1.85)
    density_max: float = 0.5


@dataclass
class PointClassification:
    center: tuple
    t0: float
    kappa_hat: float
    cls: str
    m: int | None
    density: list[float]
    diagnostics: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"singular({self.m})" if self.cls == "singular" else self.cls


def classify_kappa(kappa_hat: float, density: list[float] | None, th: Thresholds = Thresholds()) -> tuple[str, int | None]:
    """Class from ``kappa_hat`` and the contact density at decreasing radii."""
    if abs(kappa_hat - 1.5) <= th.band:
        return "regular", None
    m = int(round(kappa_hat / 2))
    if m >= 1 and abs(kappa_hat - 2 * m) <= th.band:
        if density is None:
            return "singular", m
        dens_ok = all(a >= b - 1e-12 for a, b in zip(density, density[1:])) and density[-1] <= th.density_max
        return ("singular", m) if dens_ok else ("undetermined", None)
    k = int(round((kappa_hat - 1) / 2))
    if k >= 1 and abs(kappa_hat - (2 * k + 1)) <= th.band:
        return "non-singular-odd-candidate", None
    return "undetermined", None


def density_radii(h: float) -> list[float]:
    """Three dyadic radii, largest first."""
    return [16 * h, 8 * h, 4 * h]


def classify_point(u: Field, trunc: TruncationSpec, h: float, fb: FreeBoundarySets | None = None,
                   center=None, t0: float = 0.0, cutoff: Cutoff | None = None,
                   thresholds: Thresholds = Thresholds(), quad: QuadSpec = DEFAULT_QUAD) -> PointClassification:
    """Classify the point ``(center, t0)`` of the field ``u``.

    ``u`` is evaluated about ``center`` (pass ``center=None`` when ``u`` is
    already centered). The contact density comes from ``fb`` when given.
    """
    est = estimate_kappa(u, trunc, h, center=center, t0=t0, cutoff=cutoff, quad=quad)
    c = np.zeros(u.n) if center is None else np.asarray(center, dtype=float)
    dens = None
    if fb is not None:
        dens = [contact_density(fb, c[:-1], t0, r) for r in density_radii(h)]
    cls, m = classify_kappa(est.kappa_hat, dens, thresholds)
    return PointClassification(tuple(float(v) for v in c), t0, est.kappa_hat, cls, m, dens or [],
                               {"slope_kappa": est.slope_kappa, "window": (float(est.r[0]), float(est.r[-1]))})


# --------------------------------------------------------------------------
# pipeline helpers
# --------------------------------------------------------------------------


def centered_subtraction(v: Field, phi: PolySpec, center, k: int, t0: float = 0.0,
                         cutoff: Cutoff | None = None, ell: float | None = None) -> ObstacleSubtraction:
    """Translate ``v`` and ``phi`` to ``(center, t0)`` and subtract the obstacle."""
    c = np.asarray(center, dtype=float)
    vs = ShiftedField(v, c, t0)
    shift = [Fraction(-float(ci)).limit_denominator(1 << 30) for ci in c[:-1]] + [Fraction(0)]
    phis = phi.substitute_shift(shift, Fraction(-t0).limit_denominator(1 << 30))
    return subtract_obstacle(vs, phis, k, cutoff, ell=ell)


def classification_centers(fb: FreeBoundarySets, radius: float = 0.25, level: int = -1) -> np.ndarray:
    """Extended free boundary nodes at one level with ``|x'| <= radius``."""
    pts = fb.points("gamma_star", level)
    keep = np.linalg.norm(pts, axis=-1) <= radius + 1e-12
    return pts[keep]


# --------------------------------------------------------------------------
# singular blowup fits
# --------------------------------------------------------------------------


def caloric_basis(n: int, kappa: int) -> tuple[list, list[PolySpec]]:
    """Exact rational basis of even, caloric, ``kappa``-homogeneous polynomials."""
    keys = homogeneous_basis(n, kappa, even_in_xn=True)
    heats = [PolySpec(n, {k: 1}).heat() for k in keys]
    rows = sorted({key for hp in heats for key in hp.terms})
    if rows:
        A = sp.Matrix([[sp.Rational(str(hp.coeff(*row))) for hp in heats] for row in rows])
        null = A.nullspace()
    else:
        null = [sp.eye(len(keys))[:, j] for j in range(len(keys))]
    basis = []
    for vec in null:
        terms = {keys[j]: Fraction(str(vec[j])) for j in range(len(keys)) if vec[j] != 0}
        basis.append(PolySpec(n, terms, kappa))
    return keys, basis


@dataclass
class SingularFit:
    p: PolySpec
    coefficients: dict
    condition: float
    residual: float
    r: float
    member: tuple[bool, str]
    monneau_r: np.ndarray
    monneau: np.ndarray


def _to_fraction(x: float, den: int = 10 ** 6) -> Fraction:
    return Fraction(x).limit_denominator(den)


def fit_singular_polynomial(u: Field, kappa: int, r: float, center=None, t0: float = 0.0,
                            quad: QuadSpec = DEFAULT_QUAD, monneau_radii=None) -> SingularFit:
    """Gaussian-weighted least squares of ``u(r y, r^2 s) / r^kappa`` on ``P_kappa``'s span.

    The caloric constraint is imposed exactly by fitting in an exact
    rational basis of its solution space.
    """
    base = ShiftedField(u, center, t0) if center is not None else u
    ur = ScaledField(base, r, r ** kappa)
    _, basis = caloric_basis(u.n, kappa)
    if not basis:
        raise ValueError(f"no caloric polynomials of degree {kappa}")
    x, t, w = _strip_points(ur, 1.0, 0.0, quad)
    if not np.all(ur.contains(x, t)):
        raise DomainError("fit window exceeds the domain")
    y = ur(x, t)
    B = np.stack([b.evaluate(x, t) for b in basis], axis=-1)
    sw = np.sqrt(w)
    A = B * sw[:, None]
    rhs = y * sw
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    cond = float(np.linalg.cond(A))
    resid = float(np.linalg.norm(A @ coef - rhs) / max(np.linalg.norm(rhs), 1e-300))
    p = PolySpec.zero(u.n)
    for c, b in zip(coef, basis):
        p = p + b * _to_fraction(float(c))
    p = p.with_kappa(kappa) if not p.is_zero() else p
    member = in_class_P(p, kappa) if not p.is_zero() else (False, "zero fit")
    radii = np.asarray(monneau_radii if monneau_radii is not None else [r, 2 * r], dtype=float)
    mvals = np.array([monneau(base, p, kappa, rr, quad, check=False) for rr in radii]) if not p.is_zero() else np.full(len(radii), np.nan)
    coeffs = {key: float(c) for key, c in p.terms.items()}
    return SingularFit(p, coeffs, cond, resid, r, member, radii, mvals)


def singular_spatial_dimension(p: PolySpec, rtol: float = 0.0) -> int:
    """``n - 1 - rank`` of the constant vectors ``grad' d^a' d_t^j p``, ``|a'| + 2j = kappa - 1``.

    With ``rtol = 0`` the rank is exact over the rationals and ``p`` must lie
    in ``P_kappa``. Fitted polynomials carry noise; a positive ``rtol`` uses a
    singular value threshold relative to the largest coefficient instead.
    When the dimension is ``n - 1`` the polynomial must be a multiple of the
    time-like polynomial of the same degree; this is asserted.
    """
    kappa = p.homogeneity()
    if kappa is None or p.is_zero():
        raise ValueError("polynomial is not homogeneous")
    if rtol == 0:
        ok, why = in_class_P(p, kappa)
        if not ok:
            raise ValueError(f"polynomial is not in P_kappa: {why}")
    n = p.n
    vecs = []
    for j in range((kappa - 1) // 2 + 1):
        for alpha in product(range(kappa), repeat=n - 1):
            if sum(alpha) + 2 * j != kappa - 1:
                continue
            q = p.diff_multi(tuple(alpha) + (0,), j)
            vec = []
            for i in range(n - 1):
                gi = q.diff(i)
                if gi.degree() > 0:
                    raise ValueError("derivative is not constant; homogeneity mismatch")
                vec.append(gi.coeff((0,) * n, 0))
            vecs.append(vec)
    if not vecs:
        rank = 0
    elif rtol == 0:
        rank = sp.Matrix([[sp.Rational(c.numerator, c.denominator) for c in v] for v in vecs]).rank()
    else:
        scale = max(abs(float(c)) for c in p.terms.values())
        sv = np.linalg.svd(np.array(vecs, dtype=float), compute_uv=False)
        rank = int(np.sum(sv > rtol * scale))
    d = (n - 1) - rank
    if d == n - 1:
        _assert_timelike(p, kappa, rtol)
    return d


def _assert_timelike(p: PolySpec, kappa: int, rtol: float = 0.0):
    if kappa % 2:
        raise AssertionError("full-dimensional singular polynomial must have even degree")
    ref = timelike_polynomial(kappa // 2, 1, p.n)
    keys = sorted(set(ref.terms) | set(p.terms))
    a = np.array([float(ref.coeff(*k)) for k in keys])
    b = np.array([float(p.coeff(*k)) for k in keys])
    c = float(a @ b / (a @ a))
    if rtol == 0:
        key = next(iter(ref.terms))
        cf = p.coeff(*key) / ref.terms[key]
        good = cf > 0 and p == ref * cf
    else:
        good = c > 0 and np.linalg.norm(b - c * a) <= rtol * np.linalg.norm(b)
    if not good:
        raise AssertionError(f"d = n-1 but {p!r} is not a multiple of the time-like polynomial")


# --------------------------------------------------------------------------
# regular set graph
# --------------------------------------------------------------------------


@dataclass
class GraphFit:
    xpp: np.ndarray  # (columns, n-2) coordinates x''
    t: np.ndarray  # (levels,)
    g: np.ndarray  # (levels, columns)
    lip_x: float
    hold_t: float
    eta: float
    cone_min: float
    cone_ok: bool


def regular_graph_fit(fb: FreeBoundarySets, v: GridField | None = None, prob: SignoriniProblem | None = None,
                      xpp_range=(-0.25, 0.25), t_range=(-0.25, 0.0), xm_range=(-0.5, 0.5),
                      eta: float = math.pi / 4, cone_tol: float | None = None) -> GraphFit:
    """Interface ``x_{n-1} = g(x'', t)`` between contact and non-contact nodes.

    Per column the crossing of ``gap = tol_c`` is interpolated linearly
    between the last contact and the first non-contact node.
    """
    X = fb.thin_x
    ntan = X.shape[1]
    axes = [np.unique(np.round(X[:, i], 12)) for i in range(ntan)]
    shape = tuple(len(a) for a in axes)
    levels = np.nonzero((fb.times >= t_range[0] - 1e-14) & (fb.times <= t_range[1] + 1e-14))[0]
    if ntan > 1:
        cols_mask = np.all((axes[0][:, None] >= xpp_range[0] - 1e-12) & (axes[0][:, None] <= xpp_range[1] + 1e-12), axis=1)
        col_idx = np.nonzero(cols_mask)[0]
    else:
        col_idx = np.array([0])
    xaxis = axes[-1]
    sel = (xaxis >= xm_range[0] - 1e-12) & (xaxis <= xm_range[1] + 1e-12)
    g = np.full((len(levels), len(col_idx)), np.nan)
    for a, k in enumerate(levels):
        gap = fb.gap[k].reshape(shape)
        con = fb.contact[k].reshape(shape)
        for b, ci in enumerate(col_idx):
            gc = gap[ci] if ntan > 1 else gap
            cc = con[ci] if ntan > 1 else con
            gs, cs, xs = gc[sel], cc[sel], xaxis[sel]
            flips = np.nonzero(cs[:-1] != cs[1:])[0]
            if len(flips) == 0:
                continue
            mid = 0.5 * (xs[0] + xs[-1])
            i = flips[np.argmin(np.abs(xs[flips] - mid))]
            ic, inc = (i, i + 1) if cs[i] else (i + 1, i)
            d = gs[inc] - gs[ic]
            th = np.clip((fb.tol_c - gs[ic]) / d, 0.0, 1.0) if d > 0 else 0.5
            g[a, b] = xs[ic] + th * (xs[inc] - xs[ic])
    if np.all(np.isnan(g)):
        raise ValueError("window contains no interface column")
    lip = 0.0
    if ntan > 1 and len(col_idx) > 1:
        dx = np.diff(axes[0][col_idx])
        dg = np.abs(np.diff(g, axis=1))
        lip = float(np.nanmax(dg / dx[None, :])) if np.any(np.isfinite(dg)) else 0.0
    hold = 0.0
    if len(levels) > 1:
        dt = np.diff(fb.times[levels])
        dg = np.abs(np.diff(g, axis=0))
        q = dg / np.sqrt(dt)[:, None]
        hold = float(np.nanmax(q)) if np.any(np.isfinite(q)) else 0.0
    cone_min, cone_ok = math.nan, True
    if v is not None and prob is not None:
        cone_min = _cone_check(fb, v, prob, levels, eta, xm_range)
        tol = fb.tol_c if cone_tol is None else cone_tol
        cone_ok = cone_min >= -tol
    xcols = axes[0][col_idx][:, None] if ntan > 1 else np.zeros((1, 0))
    return GraphFit(xcols, fb.times[levels], g, lip, hold, eta, cone_min, cone_ok)


def _cone_check(fb, v, prob, levels, eta, xm_range):
    """Min over window nodes of one-step differences of ``v - phi`` along cone directions.

    Directions: unit vectors in the thin plane within angle ``eta`` of
    ``+e_{n-1}`` (only ``+e_{n-1}`` itself for n = 2), scaled to one mesh step.
    """
    grid = v.grid
    h = grid.h
    n = grid.n
    dirs = [np.eye(n)[n - 2]]
    if n > 2:
        for s in (-1, 1):
            e = np.zeros(n)
            e[n - 2] = math.cos(eta)
            e[0] = s * math.sin(eta)
            dirs.append(e)
    pts = fb.thin_x
    inside = (pts[:, -1] >= xm_range[0]) & (pts[:, -1] <= xm_range[1])
    x = np.concatenate([pts[inside], np.zeros((int(inside.sum()), 1))], axis=1)
    worst = math.inf
    for k in levels:
        t = fb.times[k]
        for e in dirs:
            xe = x + h * e
            ok = grid.contains(xe, np.full(len(x), t))
            a = v(x[ok], t) - prob.phi(x[ok], t)
            b = v(xe[ok], t) - prob.phi(xe[ok], t)
            if a.size:
                worst = min(worst, float(np.min(b - a)))
    return worst


# --------------------------------------------------------------------------
# growth diagnostics
# --------------------------------------------------------------------------


def H_slope(u: Field, r_lo: float, r_hi: float, quad: QuadSpec = DEFAULT_QUAD, per_decade: int = 64) -> float:
    """Log-log slope of ``H(r)`` fitted over ``[r_lo, r_hi]``."""
    r = log_r_grid(r_lo, r_hi, per_decade)
    if len(r) < 2:
        r = np.array([r_lo, r_hi])
    H = np.array([H_only(u, ri, 0.0, quad) for ri in r])
    return float(np.polyfit(np.log(r), np.log(H), 1)[0])


def pointwise_growth(v: GridField, center, t0: float, radii) -> np.ndarray:
    """``sup_{Q_r} |v| / r^(3/2)`` over grid nodes and stored levels, per radius."""
    X = v.grid.coords
    c = np.asarray(center, dtype=float)
    out = []
    for r in radii:
        inball = np.linalg.norm(X - c, axis=-1) < r + 1e-12
        lv = (v.times <= t0 + 1e-14) & (v.times >= t0 - r * r - 1e-14)
        sup = float(np.abs(v.values[lv][:, inball]).max()) if np.any(lv) and np.any(inball) else 0.0
        out.append(sup / r ** 1.5)
    return np.array(out)


def growth_constant_variation(ratios: np.ndarray) -> float:
    """Relative spread of the running bound ``C(r) = max_{rho >= r} ratio``.

    ``ratios`` are ordered from the largest radius to the smallest.
    """
    C = np.maximum.accumulate(np.asarray(ratios, dtype=float))
    return float((C.max() - C.min()) / C.max()) if C.max() > 0 else 0.0


def blowup_homogeneity_residual(u: Field, kappa: float, r: float, center=None, t0: float = 0.0,
                                h_fd: float = 1e-3, quad: QuadSpec = DEFAULT_QUAD) -> float:
    """Weighted ``L2`` norm of ``Z u_r - kappa u_r`` relative to ``u_r`` over ``S_1^+``."""
    ur = rescale(u, center, r, "H_norm", t0=t0, quad=quad)
    x, t, w = _strip_points(ur, 1.0, 0.0, quad)
    lo, hi = 1 - h_fd, 1 + h_fd
    Zu = (ur(hi * x, hi * hi * t) - ur(lo * x, lo * lo * t)) / (2 * h_fd)
    val = ur(x, t)
    return float(np.sqrt(np.sum(w * (Zu - kappa * val) ** 2) / max(np.sum(w * val ** 2), 1e-300)))


@dataclass
class Blowup:
    field: Field
    radii: np.ndarray
    cauchy: np.ndarray  # weighted L2 distance between consecutive rescalings


def blowup(u: Field, radii, center=None, t0: float = 0.0, quad: QuadSpec = DEFAULT_QUAD) -> Blowup:
    """Finest ``H``-normalized rescaling with Cauchy differences over decreasing ``radii``."""
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    fields = [rescale(u, center, r, "H_norm", t0=t0, quad=quad) for r in radii]
    x, t, w = _strip_points(fields[0], 1.0, 0.0, quad)
    vals = [f(x, t) for f in fields]
    cauchy = np.array([math.sqrt(float(np.sum(w * (a - b) ** 2))) for a, b in zip(vals, vals[1:])])
    return Blowup(fields[-1], radii, cauchy)
