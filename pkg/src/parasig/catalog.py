"""Exact homogeneous solutions, caloric polynomials and obstacle subtraction.

Complex powers ``(x1 + i x_n)^s`` are taken in polar form with
``theta = atan2(|x_n|, x1)`` in ``[0, pi]``, which is the even reflection of
the upper half-plane branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import comb, factorial

import numpy as np
import sympy as sp

from .grid import (
    ClosedFormField,
    CutoffField,
    DomainError,
    Field,
    ParabolicPoint,
    PolyField,
    SumField,
    _prep,
    parabolic_norm_array,
)
from .poly import PolySpec

KINDS = ("halfspace_32", "halfspace_2m_half", "halfspace_2m", "halfspace_2m1", "timelike", "taylor_cntrex")


class UnsupportedBranch(DomainError):
    """The requested branch of a catalog solution is out of scope."""


# --------------------------------------------------------------------------
# polynomial constructions
# --------------------------------------------------------------------------


def caloric_extend(q: PolySpec) -> PolySpec:
    """Even-in-``x_n`` caloric polynomial with thin trace ``q``.

    ``sum_j (d_t - Delta')^j q * x_n^(2j) / (2j)!``; the sum terminates since
    ``d_t - Delta'`` lowers the parabolic degree by two.
    """
    if q.depends_on_xn():
        raise ValueError("caloric_extend expects a polynomial in (x', t) only")
    n = q.n
    out = PolySpec.zero(n)
    term = q
    j = 0
    while not term.is_zero():
        xn = PolySpec.monomial(n, [0] * (n - 1) + [2 * j], 0, Fraction(1, factorial(2 * j)))
        out = out + term * xn
        term = term.diff("t") - term.laplacian(thin=True)
        j += 1
    k = q.homogeneity()
    return out.with_kappa(k) if k is not None else out


def timelike_polynomial(m: int, C=1, n: int = 2) -> PolySpec:
    """``C (-1)^m sum_k t^(m-k)/(m-k)! * x_n^(2k)/(2k)!``, a member of P_(2m)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    C = Fraction(C)
    if C <= 0:
        raise ValueError("C must be positive")
    terms = {}
    for k in range(m + 1):
        alpha = (0,) * (n - 1) + (2 * k,)
        terms[(alpha, m - k)] = C * (-1) ** m / (factorial(m - k) * factorial(2 * k))
    return PolySpec(n, terms, 2 * m)


def re_power_poly(n: int, j: int, k: int) -> PolySpec:
    """``Re (x_j + i x_n)^k`` expanded (0-based ``j < n - 1``)."""
    terms = {}
    for l in range(0, k + 1, 2):
        alpha = [0] * n
        alpha[j] = k - l
        alpha[-1] = l
        terms[(tuple(alpha), 0)] = Fraction(comb(k, l) * (-1) ** (l // 2))
    return PolySpec(n, terms, k)


def im_power_poly(n: int, j: int, k: int) -> PolySpec:
    """``Im (x_j + i x_n)^k`` expanded."""
    terms = {}
    for l in range(1, k + 1, 2):
        alpha = [0] * n
        alpha[j] = k - l
        alpha[-1] = l
        terms[(tuple(alpha), 0)] = Fraction(comb(k, l) * (-1) ** (l // 2))
    return PolySpec(n, terms, k)


def monneau_positive_polynomial(n: int, m: int) -> PolySpec:
    """Caloric polynomial positive on the thin set for ``t < 0``."""
    if n < 2 or m < 1:
        raise ValueError("need n >= 2 and m >= 1")
    out = PolySpec.zero(n)
    for j in range(n - 1):
        out = out + re_power_poly(n, j, 2 * m)
    terms = {}
    for k in range(m + 1):
        alpha = (0,) * (n - 1) + (2 * k,)
        terms[(alpha, m - k)] = Fraction((-1) ** m * factorial(m), factorial(m - k) * factorial(2 * k))
    return (out + PolySpec(n, terms)).with_kappa(2 * m)


def taylor_polynomial(phi: PolySpec, k: int) -> PolySpec:
    """Terms of ``phi`` with parabolic degree at most ``k``."""
    return PolySpec(phi.n, {key: c for key, c in phi.terms.items() if sum(key[0]) + 2 * key[1] <= k})


def in_class_P(p: PolySpec, kappa: int | None = None, samples: int = 64, seed: int = 0) -> tuple[bool, str]:
    """Membership test for P_kappa: homogeneous, caloric, even, thin trace >= 0.

    Nonnegativity of the trace is checked on sampled points of the
    thin set in ``t <= 0`` (exact rational evaluation).
    """
    k = p.homogeneity()
    if p.is_zero() or k is None:
        return False, "not homogeneous"
    if kappa is not None and k != kappa:
        return False, f"homogeneity {k} != {kappa}"
    if not p.is_caloric():
        return False, "not caloric"
    if not p.is_even_in_xn():
        return False, "not even in x_n"
    rng = np.random.default_rng(seed)
    trace = p.restrict_thin()
    for _ in range(samples):
        x = [Fraction(int(v), 16) for v in rng.integers(-32, 33, size=p.n - 1)] + [Fraction(0)]
        t = -Fraction(int(rng.integers(0, 33)), 16)
        if trace.evaluate_exact(x, t) < 0:
            return False, f"negative thin trace at x={x}, t={t}"
    return True, "ok"


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------


def _polar(x):
    x1 = x[..., 0]
    y = np.abs(x[..., -1])
    return np.hypot(x1, y), np.arctan2(y, x1)


def _rpow(rho, s):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(rho > 0, rho ** s, 0.0) if s > 0 else rho ** s


@dataclass(frozen=True)
class CatalogSolution:
    """Closed-form global solution with known homogeneity.

    ``direction`` (length ``n - 1`` unit vector) rotates the complex-power
    kinds: the real variable becomes ``x' . direction``.
    """

    kind: str
    m: int = 1
    C: float = 1.0
    n: int = 2
    direction: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown catalog kind {self.kind!r}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.C <= 0:
            raise ValueError("amplitude must be positive")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.direction is not None:
            d = np.asarray(self.direction, dtype=float)
            if d.shape != (self.n - 1,) or not np.isclose(np.linalg.norm(d), 1.0):
                raise ValueError("direction must be a unit vector in R^(n-1)")

    @property
    def kappa(self) -> float:
        return {
            "halfspace_32": 1.5,
            "halfspace_2m_half": 2 * self.m - 0.5,
            "halfspace_2m": 2.0 * self.m,
            "halfspace_2m1": 2.0 * self.m + 1,
            "timelike": 2.0 * self.m,
            "taylor_cntrex": 2.0,
        }[self.kind]

    @property
    def is_polynomial(self) -> bool:
        return self.kind in ("timelike", "taylor_cntrex")

    @cached_property
    def poly(self) -> PolySpec | None:
        if self.kind == "timelike":
            return timelike_polynomial(self.m, Fraction(self.C), self.n)
        if self.kind == "taylor_cntrex":
            return timelike_polynomial(1, Fraction(self.C), self.n)
        return None

    def _planar(self, x):
        """Map to the (real, |x_n|) plane used by the complex-power kinds."""
        if self.direction is None:
            return x[..., [0, -1]]
        d = np.asarray(self.direction)
        return np.stack([x[..., :-1] @ d, x[..., -1]], axis=-1)

    def value(self, x, t) -> np.ndarray:
        x, t = _prep(x, t)
        if self.kind == "taylor_cntrex" and np.any(t > 0):
            raise UnsupportedBranch("taylor_cntrex is only provided for t <= 0")
        if self.is_polynomial:
            return self.poly.evaluate(x, t)
        rho, th = _polar(self._planar(x))
        k = self.kappa
        if self.kind == "halfspace_2m1":
            return -self.C * _rpow(rho, k) * np.sin(k * th)
        return self.C * _rpow(rho, k) * np.cos(k * th)

    def grad(self, x, t) -> np.ndarray:
        """Analytic gradient; at ``x_n = 0`` the normal component is the limit from ``x_n > 0``."""
        x, t = _prep(x, t)
        if self.is_polynomial:
            return np.stack([self.poly.diff(i).evaluate(x, t) for i in range(self.n)], axis=-1)
        rho, th = _polar(self._planar(x))
        k = self.kappa
        a = self.C * k * _rpow(rho, k - 1)
        if self.kind == "halfspace_2m1":
            d1, dy = -a * np.sin((k - 1) * th), -a * np.cos((k - 1) * th)
        else:
            d1, dy = a * np.cos((k - 1) * th), -a * np.sin((k - 1) * th)
        sgn = np.where(x[..., -1] < 0, -1.0, 1.0)
        out = np.zeros(x.shape)
        if self.direction is None:
            out[..., 0] = d1
        else:
            out[..., :-1] = d1[..., None] * np.asarray(self.direction)
        out[..., -1] = sgn * dy
        return out

    def dt(self, x, t) -> np.ndarray:
        x, t = _prep(x, t)
        if self.is_polynomial:
            return self.poly.diff("t").evaluate(x, t)
        return np.zeros(t.shape)

    def field(self) -> ClosedFormField:
        return ClosedFormField(
            self.value,
            self.n,
            grad=self.grad,
            dt=self.dt,
            domain="strip",
            even=True,
            t_max=0.0 if self.kind == "taylor_cntrex" else math.inf,
            name=f"{self.kind}(m={self.m}, C={self.C})",
        )

    def symbolic(self):
        """Sympy expression ``(expr, vars)``; polar ``(rho, theta, t)`` for complex powers."""
        if self.is_polynomial:
            xs = sp.symbols(f"x1:{self.n + 1}")
            tt = sp.Symbol("t")
            expr = sum(
                sp.Rational(c.numerator, c.denominator)
                * sp.Mul(*[xi ** a for xi, a in zip(xs, alpha)])
                * tt ** j
                for (alpha, j), c in self.poly.terms.items()
            )
            return expr, (*xs, tt)
        rho, th = sp.symbols("rho theta", positive=True)
        k = sp.nsimplify(self.kappa)
        C = sp.nsimplify(self.C)
        base = -sp.sin(k * th) if self.kind == "halfspace_2m1" else sp.cos(k * th)
        return C * rho ** k * base, (rho, th, sp.Symbol("t"))

    def symbolic_heat_residual(self):
        """Exact ``(Delta - d_t) u`` in the upper half-plane (should simplify to 0)."""
        expr, vars_ = self.symbolic()
        if self.is_polynomial:
            *xs, tt = vars_
            res = sum(sp.diff(expr, xi, 2) for xi in xs) - sp.diff(expr, tt)
        else:
            rho, th, _ = vars_
            res = sp.diff(expr, rho, 2) + sp.diff(expr, rho) / rho + sp.diff(expr, th, 2) / rho ** 2
        return sp.simplify(res)


def eval_catalog(sol: CatalogSolution, p: ParabolicPoint) -> float:
    x, t = p.as_arrays()
    return float(sol.value(x, t))


def suite_catalog(n: int = 2) -> list[CatalogSolution]:
    """The catalog members used in the acceptance suite."""
    return [
        CatalogSolution("halfspace_32", n=n),
        CatalogSolution("halfspace_2m_half", m=2, n=n),
        CatalogSolution("halfspace_2m", m=1, n=n),
        CatalogSolution("halfspace_2m1", m=1, n=n),
        CatalogSolution("halfspace_2m", m=2, n=n),
        CatalogSolution("timelike", m=1, n=n),
        CatalogSolution("timelike", m=2, n=n),
        CatalogSolution("taylor_cntrex", n=n),
    ]


@dataclass
class CatalogCheck:
    name: str
    passed: bool
    value: float
    tol: float


def check_catalog_solution(sol: CatalogSolution, samples: int = 1000, seed: int = 0, tol: float = 1e-10) -> list[CatalogCheck]:
    """Homogeneity, thin Signorini triple and caloricity checks for one member."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(samples, sol.n))
    t = -rng.uniform(0, 1, size=samples)
    u = sol.value(x, t)
    out = []
    worst = 0.0
    for lam in (0.5, 2.0):
        ul = sol.value(lam * x, lam * lam * t)
        ref = lam ** sol.kappa * u
        err = np.abs(ul - ref) / np.maximum(np.abs(ref), 1e-300)
        err = np.where(np.abs(ref) < 1e-14, np.abs(ul - ref), err)
        worst = max(worst, float(err.max()))
    out.append(CatalogCheck(f"{sol.kind}:homogeneity", worst <= tol, worst, tol))

    xt = x.copy()
    xt[:, -1] = 0.0
    tr = sol.value(xt, t)
    flux = sol.grad(xt, t)[:, -1]
    scale = max(1.0, float(np.abs(tr).max()), float(np.abs(flux).max()))
    pen = float(np.maximum(-tr, 0).max()) / scale
    pos = float(np.maximum(flux, 0).max()) / scale
    comp = float(np.abs(tr * flux).max()) / scale ** 2
    out.append(CatalogCheck(f"{sol.kind}:trace>=0", pen <= tol, pen, tol))
    out.append(CatalogCheck(f"{sol.kind}:flux<=0", pos <= tol, pos, tol))
    out.append(CatalogCheck(f"{sol.kind}:complementarity", comp <= tol, comp, tol))
    even = bool(np.array_equal(u, sol.value(_mirror(x), t)))
    out.append(CatalogCheck(f"{sol.kind}:even", even, 0.0, 0.0))

    res = sol.symbolic_heat_residual()
    out.append(CatalogCheck(f"{sol.kind}:caloric(symbolic)", res == 0, 0.0 if res == 0 else math.nan, 0.0))
    # numeric caloric check off the thin set, x_n > 0
    xs = x.copy()
    xs[:, -1] = np.abs(xs[:, -1]) + 0.2
    lap = _numeric_heat(sol, xs, t)
    scale = max(1.0, float(np.abs(sol.value(xs, t)).max()))
    out.append(CatalogCheck(f"{sol.kind}:caloric(numeric)", lap / scale <= 1e-5, lap / scale, 1e-5))
    return out


def _mirror(x):
    y = np.array(x, copy=True)
    y[..., -1] *= -1
    return y


def _numeric_heat(sol: CatalogSolution, x, t, eta: float = 1e-3) -> float:
    """Sup of a fourth-order finite-difference heat residual (sanity only)."""
    lap = np.zeros(len(t))
    for i in range(sol.n):
        e = np.zeros(sol.n)
        e[i] = eta
        lap += (
            -sol.value(x + 2 * e, t) + 16 * sol.value(x + e, t) - 30 * sol.value(x, t)
            + 16 * sol.value(x - e, t) - sol.value(x - 2 * e, t)
        ) / (12 * eta * eta)
    ut = (sol.value(x, t + eta) - sol.value(x, t - eta)) / (2 * eta) if sol.kind != "taylor_cntrex" else sol.dt(x, t)
    return float(np.abs(lap - ut).max())


# --------------------------------------------------------------------------
# cutoff and obstacle subtraction
# --------------------------------------------------------------------------


def _smooth_step_exprs():
    s = sp.Symbol("s")
    a = sp.exp(-1 / s)
    b = sp.exp(-1 / (1 - s))
    step = a / (a + b)
    return s, [step, sp.diff(step, s), sp.diff(step, s, 2)]


_S, _STEP = _smooth_step_exprs()
_STEP_FNS = [sp.lambdify(_S, e, "numpy") for e in _STEP]


@dataclass(frozen=True)
class Cutoff:
    """Radial smooth cutoff equal to 1 on ``B_plateau`` and 0 off ``B_support``.

    The profile is ``1 - S((|x| - plateau)/(support - plateau))`` with the
    standard smooth step ``S(s) = e^{-1/s} / (e^{-1/s} + e^{-1/(1-s)})``.
    """

    plateau: float = 0.5
    support: float = 0.75

    def __post_init__(self):
        if not 0 < self.plateau < self.support:
            raise ValueError("need 0 < plateau < support")

    def validate_standard(self):
        """Check the plateau covers B_1/2 and the support lies in B_3/4."""
        if self.plateau < 0.5 - 1e-15 or self.support > 0.75 + 1e-15:
            raise ValueError(
                f"cutoff plateau {self.plateau} / support {self.support} violates "
                "psi = 1 on B_1/2, supp psi in B_3/4"
            )

    @property
    def width(self) -> float:
        return self.support - self.plateau

    def support_mask(self, x) -> np.ndarray:
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1) < self.support

    def _profile(self, rho, order):
        """``d^order/drho^order`` of the radial profile."""
        s = (rho - self.plateau) / self.width
        out = np.zeros_like(rho, dtype=float)
        if order == 0:
            out[rho <= self.plateau] = 1.0
        mid = (s > 0) & (s < 1)
        if np.any(mid):
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                v = np.nan_to_num(np.asarray(_STEP_FNS[order](s[mid]), dtype=float))
            out[mid] = (1.0 - v) if order == 0 else -v / self.width ** order
        return out

    def __call__(self, x) -> np.ndarray:
        rho = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return self._profile(rho, 0)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x, axis=-1)
        d1 = self._profile(rho, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(rho[..., None] > 0, x / rho[..., None], 0.0)
        return d1[..., None] * unit

    def laplacian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        rho = np.linalg.norm(x, axis=-1)
        d1 = self._profile(rho, 1)
        d2 = self._profile(rho, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d2 + np.where(rho > 0, (n - 1) * d1 / rho, 0.0)


class ObstacleRHS(Field):
    """Right-hand side of the obstacle-subtracted problem.

    ``f = psi f_v - psi (Delta' phi_k - d_t phi_k) + (v_k - phi_k) Delta psi
    + 2 grad(v_k - phi_k) . grad psi``.
    """

    def __init__(self, w: Field, phi_k: Field, phi_k_heat: Field, cutoff: Cutoff, f_v: Field | None = None):
        self.w = w  # v_k - phi_k
        self.phi_k_heat = phi_k_heat
        self.cutoff = cutoff
        self.f_v = f_v
        self.n = w.n
        self.support_radius = cutoff.support

    def contains(self, x, t):
        x, t = _prep(x, t)
        m = self.cutoff.support_mask(x)
        ok = np.ones(t.shape, dtype=bool)
        if np.any(m):
            ok[m] = self.w.contains(x[m], t[m])
        return ok & (t <= 1e-12)

    def _value(self, x, t):
        out = np.zeros(t.shape)
        m = self.cutoff.support_mask(x)
        if not np.any(m):
            return out
        xm, tm = x[m], t[m]
        psi = self.cutoff(xm)
        val = -psi * self.phi_k_heat._value(xm, tm)
        val += self.w._value(xm, tm) * self.cutoff.laplacian(xm)
        val += 2 * np.sum(self.w.grad(xm, tm) * self.cutoff.grad(xm), axis=-1)
        if self.f_v is not None:
            val += psi * self.f_v._value(xm, tm)
        out[m] = val
        return out


@dataclass
class ObstacleSubtraction:
    u: Field
    f: Field
    q_k: PolySpec
    q_tilde: PolySpec
    cutoff: Cutoff
    M: float
    growth_ratio: float | None = None


def _as_thin_field(p: PolySpec) -> Field:
    return PolyField(p)


def subtract_obstacle(
    v: Field,
    phi: PolySpec,
    k: int,
    cutoff: Cutoff | None = None,
    remainder: Field | None = None,
    f_v: Field | None = None,
    ell: float | None = None,
    samples: int = 4000,
    seed: int = 0,
) -> ObstacleSubtraction:
    """Build ``u_k = [v - q~_k - (phi - q_k)] psi`` and its right-hand side.

    ``phi`` is a polynomial in ``(x', t)``; an optional tabulated
    ``remainder`` field is added to it. ``M`` is the measured sup of ``|f|``
    on samples; when ``ell`` is given, the sampled ratio
    ``|f| / ||(x,t)||^(ell-2)`` is reported as ``growth_ratio``.
    """
    cutoff = cutoff or Cutoff()
    cutoff.validate_standard()
    if phi.depends_on_xn():
        raise ValueError("obstacle must not depend on x_n")
    q_k = taylor_polynomial(phi, k)
    q_tilde = caloric_extend(q_k)
    phi_k_poly = phi - q_k
    phi_k_heat_poly = phi_k_poly.laplacian(thin=True) - phi_k_poly.diff("t")
    parts: list[tuple[float, Field]] = [(1.0, v), (-1.0, PolyField(q_tilde))]
    heat_parts: list[tuple[float, Field]] = [(1.0, PolyField(phi_k_heat_poly))]
    if not phi_k_poly.is_zero():
        parts.append((-1.0, PolyField(phi_k_poly)))
    if remainder is not None:
        parts.append((-1.0, remainder))
        heat_parts.append((1.0, _FDHeatThin(remainder)))
    w = SumField(parts)
    heat = SumField(heat_parts)
    u = CutoffField(w, cutoff)
    f = ObstacleRHS(w, None, heat, cutoff, f_v)

    rng = np.random.default_rng(seed)
    xs = rng.uniform(-cutoff.support, cutoff.support, size=(samples, v.n))
    xs[:, -1] = np.abs(xs[:, -1])
    xs = xs[np.linalg.norm(xs, axis=1) < cutoff.support]
    ts = -rng.uniform(0, min(1.0, cutoff.support ** 2), size=len(xs))
    ok = f.contains(xs, ts)
    fv = np.abs(f(xs[ok], ts[ok]))
    M = float(fv.max()) if fv.size else 0.0
    ratio = None
    if ell is not None and fv.size:
        nrm = parabolic_norm_array(xs[ok], ts[ok])
        ratio = float(np.max(fv / np.maximum(nrm, 1e-12) ** (ell - 2)))
    return ObstacleSubtraction(u, f, q_k, q_tilde, cutoff, M, ratio)


class _FDHeatThin(Field):
    """``Delta' r - d_t r`` of a tabulated remainder by central differences."""

    def __init__(self, base: Field, eta: float = 1e-4):
        self.base = base
        self.n = base.n
        self.eta = eta

    def contains(self, x, t):
        return self.base.contains(x, t)

    def _value(self, x, t):
        out = -self.base.dt(x, t)
        for i in range(self.n - 1):
            e = np.zeros(self.n)
            e[i] = self.eta
            out = out + (self.base._value(x + e, t) - 2 * self.base._value(x, t) + self.base._value(x - e, t)) / self.eta ** 2
        return out
