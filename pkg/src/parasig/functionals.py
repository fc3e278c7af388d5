"""Backward heat kernel quadrature and the Gaussian monotonicity functionals.

All strip integrals are evaluated in self-similar variables: with
``t = -r^2 sigma^2`` and ``x = r sigma y`` the kernel becomes the fixed
Gaussian ``G(y, -1)``, and

    H^delta(r) = int_delta^1 2 sigma h(-r^2 sigma^2) d sigma.

The substitution ``s = -sigma^2`` turns ``|s|^kappa`` time profiles of
homogeneous fields into polynomials in ``sigma``, so the time quadrature
reaches ``delta = 0`` directly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .grid import DomainError, Field
from .poly import PolySpec


class DegenerateField(ValueError):
    """H vanishes where a logarithmic derivative is needed."""


def heat_kernel_G(x, t) -> np.ndarray:
    """``(-4 pi t)^(-n/2) exp(|x|^2 / 4t)`` for ``t < 0`` and 0 otherwise."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    n = x.shape[-1]
    r2 = np.sum(x * x, axis=-1)
    neg = t < 0
    ts = np.where(neg, t, -1.0)
    val = (-4 * np.pi * ts) ** (-n / 2) * np.exp(r2 / (4 * ts))
    return np.where(neg, val, 0.0)


@lru_cache(maxsize=64)
def _gl(n: int, a: float, b: float):
    z, w = leggauss(n)
    return 0.5 * (b - a) * z + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True)
class QuadSpec:
    """Node counts for the self-similar quadrature.

    The spatial rule is polar in the ``(y_1, y_n)`` half-plane (radius up to
    ``rho_max``, or the field's support) times Gauss-Legendre in the middle
    coordinates; time uses Gauss-Legendre in ``sigma``.
    """

    n_rho: int = 48
    n_theta: int = 40
    n_mid: int = 24
    n_sigma: int = 20
    n_thin: int = 96
    rho_max: float = 12.0

    def doubled(self) -> QuadSpec:
        return QuadSpec(2 * self.n_rho, 2 * self.n_theta, 2 * self.n_mid, 2 * self.n_sigma, 2 * self.n_thin, self.rho_max)


DEFAULT_QUAD = QuadSpec()


def _gauss_weight(y) -> np.ndarray:
    n = y.shape[-1]
    return (4 * np.pi) ** (-n / 2) * np.exp(-np.sum(y * y, axis=-1) / 4)


def half_space_nodes(n: int, quad: QuadSpec, radius: float | None = None):
    """Nodes ``y`` in ``R^n_+`` and weights including ``G(y, -1)``."""
    R = quad.rho_max if radius is None else min(quad.rho_max, radius)
    rho, wr = _gl(quad.n_rho, 0.0, R)
    th, wt = _gl(quad.n_theta, 0.0, math.pi)
    P, T = np.meshgrid(rho, th, indexing="ij")
    W = np.outer(wr * rho, wt)
    planar = [P * np.cos(T), P * np.sin(T)]
    if n == 2:
        y = np.stack(planar, axis=-1).reshape(-1, 2)
        w = W.ravel()
    else:
        m, wm = _gl(quad.n_mid, -R, R)
        grids = np.meshgrid(*([m] * (n - 2)), indexing="ij")
        mids = np.stack([g.ravel() for g in grids], axis=-1)
        wmid = np.prod(np.meshgrid(*([wm] * (n - 2)), indexing="ij"), axis=0).ravel()
        P2 = planar[0].ravel()
        Q2 = planar[1].ravel()
        y = np.empty((len(P2), len(mids), n))
        y[..., 0] = P2[:, None]
        y[..., 1:-1] = mids[None]
        y[..., -1] = Q2[:, None]
        y = y.reshape(-1, n)
        w = np.outer(W.ravel(), wmid).ravel()
    return y, w * _gauss_weight(y)


def thin_nodes(n: int, quad: QuadSpec, radius: float | None = None):
    """Nodes on ``{y_n = 0}`` with weights ``G(y', 0, -1)``."""
    R = quad.rho_max if radius is None else min(quad.rho_max, radius)
    z, wz = _gl(quad.n_thin, -R, R)
    grids = np.meshgrid(*([z] * (n - 1)), indexing="ij")
    y = np.zeros((grids[0].size, n))
    for i, g in enumerate(grids):
        y[:, i] = g.ravel()
    w = np.prod(np.meshgrid(*([wz] * (n - 1)), indexing="ij"), axis=0).ravel()
    return y, w * _gauss_weight(y)


def _radius(u: Field, scale: float, quad: QuadSpec) -> float | None:
    if u.support_radius is None:
        return None
    return u.support_radius / scale


# --------------------------------------------------------------------------
# slices and strip integrals
# --------------------------------------------------------------------------


def slice_functionals(u: Field, t: float, quad: QuadSpec = DEFAULT_QUAD) -> tuple[float, float]:
    """``h(t) = int u^2 G`` and ``i(t) = -t int |grad u|^2 G`` over ``R^n_+``."""
    if not t < 0:
        raise DomainError("slice functionals need t < 0")
    s = math.sqrt(-t)
    y, w = half_space_nodes(u.n, quad, _radius(u, s, quad))
    x = s * y
    tt = np.full(len(y), float(t))
    if not np.all(u.contains(x, tt)):
        raise DomainError("slice leaves the domain of the field")
    h = float(np.sum(w * u(x, tt) ** 2))
    g = u.grad(x, tt)
    i = -t * float(np.sum(w * np.sum(g * g, axis=-1)))
    return h, i


def _strip_points(u: Field, r: float, delta: float, quad: QuadSpec):
    """Space-time nodes ``(x, t)`` of the strip rule and total weights.

    The weights integrate ``F G`` over ``S_r^+ minus S_(delta r)^+`` divided by
    ``r^2``, the normalization shared by ``H`` and ``I``.
    """
    sig, ws = _gl(quad.n_sigma, float(delta), 1.0)
    xs, ts, wts = [], [], []
    for sg, wsg in zip(sig, ws):
        scale = r * sg
        y, w = half_space_nodes(u.n, quad, _radius(u, scale, quad))
        xs.append(scale * y)
        ts.append(np.full(len(y), -scale * scale))
        wts.append(2 * sg * wsg * w)
    return np.concatenate(xs), np.concatenate(ts), np.concatenate(wts)


def _thin_points(u: Field, r: float, delta: float, quad: QuadSpec):
    """Nodes for ``int dt int_{R^(n-1)} F G`` over ``S'_r minus S'_(delta r)``, divided by ``r^2``."""
    sig, ws = _gl(quad.n_sigma, float(delta), 1.0)
    xs, ts, wts = [], [], []
    for sg, wsg in zip(sig, ws):
        scale = r * sg
        y, w = thin_nodes(u.n, quad, _radius(u, scale, quad))
        xs.append(scale * y)
        ts.append(np.full(len(y), -scale * scale))
        wts.append(2 * sg * wsg * w / scale)
    return np.concatenate(xs), np.concatenate(ts), np.concatenate(wts)


def _check_domain(u: Field, x, t):
    if not np.all(u.contains(x, t)):
        raise DomainError(f"strip quadrature leaves the domain of {u!r}")


def H_only(u: Field, r: float, delta: float = 0.0, quad: QuadSpec = DEFAULT_QUAD) -> float:
    if not 0 < r:
        raise ValueError("r must be positive")
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    x, t, w = _strip_points(u, r, delta, quad)
    _check_domain(u, x, t)
    return float(np.sum(w * u(x, t) ** 2))


def H_I(u: Field, r: float, delta: float = 0.0, quad: QuadSpec = DEFAULT_QUAD) -> tuple[float, float]:
    """``H^delta(r) = r^-2 int h``, ``I^delta(r) = r^-2 int i`` over ``(-r^2, -delta^2 r^2)``."""
    if not 0 < r:
        raise ValueError("r must be positive")
    if not 0 <= delta < 1:
        raise ValueError("delta must lie in [0, 1)")
    x, t, w = _strip_points(u, r, delta, quad)
    _check_domain(u, x, t)
    H = float(np.sum(w * u(x, t) ** 2))
    g = u.grad(x, t)
    I = float(np.sum(w * (-t) * np.sum(g * g, axis=-1)))
    return H, I


def strip_integral(F: Callable, u: Field, r: float, delta: float = 0.0, quad: QuadSpec = DEFAULT_QUAD) -> float:
    """``int_{S_r^+ minus S_(delta r)^+} F G dx dt`` (``F(x, t)`` vectorized)."""
    x, t, w = _strip_points(u, r, delta, quad)
    return r * r * float(np.sum(w * F(x, t)))


def thin_integral(F: Callable, u: Field, r: float, delta: float = 0.0, quad: QuadSpec = DEFAULT_QUAD) -> float:
    """``int_{S'_r minus S'_(delta r)} F G dx' dt``."""
    x, t, w = _thin_points(u, r, delta, quad)
    return r * r * float(np.sum(w * F(x, t)))


def richardson_delta(u: Field, r: float, deltas=(1 / 8, 1 / 16, 1 / 32), quad: QuadSpec = DEFAULT_QUAD) -> float:
    """Three-level extrapolation of ``H^delta(r)`` to ``delta = 0``.

    For bounded ``h`` near ``t = 0`` the truncation error expands in even
    powers of ``delta``; two of them are eliminated.
    """
    d = np.asarray(deltas, dtype=float)
    vals = np.array([H_only(u, r, di, quad) for di in d])
    A = np.stack([np.ones_like(d), d ** 2, d ** 4], axis=-1)
    return float(np.linalg.solve(A, vals)[0])


# --------------------------------------------------------------------------
# truncation and profiles
# --------------------------------------------------------------------------


@dataclass
class TruncationSpec:
    """Truncation data for the generalized frequency.

    The standard ``mu(r) = M^2 r^(2 ell0)`` is used unless ``mu`` is given.
    ``M = 0`` switches truncation off (``H``-branch everywhere).
    """

    ell0: float = 4.0
    M: float = 0.0
    C: float = 0.0
    sigma: float = 1.0
    C_mu: float = 1.0
    ell: float | None = None
    k: int | None = None
    gamma: float | None = None
    mu: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.sigma <= 0 or self.C_mu <= 0 or self.C < 0:
            raise ValueError("need sigma > 0, C_mu > 0, C >= 0")

    def mu_value(self, r) -> np.ndarray:
        if self.mu is not None:
            return np.asarray(self.mu(r), dtype=float)
        return self.M ** 2 * np.asarray(r, dtype=float) ** (2 * self.ell0)

    @property
    def kappa_mu(self) -> float:
        """``(1/2) lim_{r -> 0} r mu'/mu``; exact for the power law."""
        if self.mu is None:
            return float(self.ell0)
        r, e = 1e-6, 1e-3
        return 0.5 * float(np.log(self.mu_value(r * (1 + e)) / self.mu_value(r * (1 - e))) / np.log((1 + e) / (1 - e)))

    def check(self, r_samples=None) -> None:
        """``mu > 0`` and ``r mu'/mu`` nondecreasing on samples."""
        if self.mu is None and self.M == 0:
            return
        r = np.geomspace(1e-3, 0.99, 64) if r_samples is None else np.asarray(r_samples)
        m = self.mu_value(r)
        if np.any(m <= 0):
            raise ValueError("mu must be positive on (0, 1)")
        lm = np.log(m)
        slope = np.gradient(lm, np.log(r))
        if np.any(np.diff(slope) < -1e-8 * np.abs(slope).max()):
            raise ValueError("r mu'/mu must be nondecreasing")

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "mu"}
        d["mu"] = "M^2 r^(2 ell0)" if self.mu is None else "custom"
        d["kappa_mu"] = self.kappa_mu
        return d


def log_r_grid(r_min: float, r_max: float, per_decade: int = 64) -> np.ndarray:
    """Points ``10^(k/per_decade)`` in ``[r_min, r_max]``."""
    lo = math.ceil(math.log10(r_min) * per_decade - 1e-9)
    hi = math.floor(math.log10(r_max) * per_decade + 1e-9)
    return 10.0 ** (np.arange(lo, hi + 1) / per_decade)


@dataclass
class FunctionalProfile:
    r: np.ndarray
    H: np.ndarray
    I: np.ndarray
    Hdelta: np.ndarray
    Idelta: np.ndarray
    Phi: np.ndarray
    W: np.ndarray
    M: np.ndarray
    branch: np.ndarray
    delta: float
    kappa: float | None
    trunc: TruncationSpec
    quad: QuadSpec
    per_decade: int = 64

    COLUMNS = ("r", "H", "I", "Hdelta", "Idelta", "Phi", "W", "M")

    def __len__(self):
        return len(self.r)

    def metadata(self) -> dict:
        return {
            "delta": self.delta,
            "kappa": self.kappa,
            "per_decade": self.per_decade,
            "truncation": self.trunc.as_dict(),
            "quadrature": asdict(self.quad),
            "branch": [str(b) for b in self.branch],
        }


def _log_derivative(vals_minus, vals_plus, eta):
    return (np.log(vals_plus) - np.log(vals_minus)) / (2 * eta)


def frequency_profile(
    u: Field,
    trunc: TruncationSpec,
    r_grid,
    delta: float = 1 / 8,
    kappa: float | None = None,
    p: PolySpec | None = None,
    quad: QuadSpec = DEFAULT_QUAD,
    per_decade: int = 64,
) -> FunctionalProfile:
    """Generalized frequency, Weiss and Monneau values along ``r_grid``.

    ``Phi(r) = 1/2 e^{C r^s} d log max{H, mu} / d log r + 2 (e^{C r^s} - 1)``
    with centered differences at ``r 10^{+-1/per_decade}``. ``H`` and ``I``
    are the untruncated (``delta = 0``) averages; the ``delta`` columns
    report the truncated ones.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size == 0:
        raise ValueError("empty r grid")
    trunc.check()
    eta = math.log(10) / per_decade
    cache: dict[float, tuple[float, float]] = {}

    def HI(r):
        key = round(math.log(r) / eta * 1000)
        if key not in cache:
            cache[key] = H_I(u, r, 0.0, quad)
        return cache[key]

    rows = {c: [] for c in ("H", "I", "Hd", "Id", "Phi", "W", "M", "branch")}
    wmono = None
    if p is not None:
        from .grid import PolyField, SumField

        wmono = SumField([(1.0, u), (-1.0, PolyField(p))])
    for r in r_grid:
        H, I = HI(r)
        Hm, _ = HI(r * math.exp(-eta))
        Hp, _ = HI(r * math.exp(eta))
        Hd, Id = H_I(u, r, delta, quad) if delta > 0 else (H, I)
        mus = trunc.mu_value(np.array([r * math.exp(-eta), r, r * math.exp(eta)]))
        lm, lp = max(Hm, mus[0]), max(Hp, mus[2])
        if min(lm, lp) <= 0:
            raise DegenerateField(f"H vanishes at r={r:.4g} and no truncation is active")
        ex = math.exp(trunc.C * r ** trunc.sigma)
        phi = 0.5 * ex * _log_derivative(lm, lp, eta) + 2 * (ex - 1)
        rows["H"].append(H)
        rows["I"].append(I)
        rows["Hd"].append(Hd)
        rows["Id"].append(Id)
        rows["Phi"].append(phi)
        rows["branch"].append("H" if H > mus[1] else "mu")
        rows["W"].append(r ** (-2 * kappa) * (I - kappa / 2 * H) if kappa is not None else math.nan)
        rows["M"].append(H_only(wmono, r, 0.0, quad) / r ** (2 * kappa) if (wmono is not None and kappa is not None) else math.nan)
    return FunctionalProfile(
        r_grid, np.array(rows["H"]), np.array(rows["I"]), np.array(rows["Hd"]), np.array(rows["Id"]),
        np.array(rows["Phi"]), np.array(rows["W"]), np.array(rows["M"]), np.array(rows["branch"]),
        delta, kappa, trunc, quad, per_decade,
    )


def write_profile_csv(profile: FunctionalProfile, path: str | Path) -> Path:
    """CSV with columns ``r,H,I,Hdelta,Idelta,Phi,W,M`` and a JSON sidecar."""
    if len(profile) == 0:
        raise ValueError("empty profile")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FunctionalProfile.COLUMNS)
        for i in range(len(profile)):
            w.writerow([repr(float(getattr(profile, c)[i])) for c in FunctionalProfile.COLUMNS])
    path.with_suffix(".meta.json").write_text(json.dumps(profile.metadata(), indent=2, sort_keys=True))
    return path


def read_profile_csv(path: str | Path) -> FunctionalProfile:
    path = Path(path)
    with path.open() as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != FunctionalProfile.COLUMNS:
        raise ValueError(f"unexpected header {rows[0]}")
    data = np.array([[float(v) for v in row] for row in rows[1:]]).reshape(-1, len(FunctionalProfile.COLUMNS))
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    tr = {k: v for k, v in meta["truncation"].items() if k not in ("mu", "kappa_mu")}
    cols = {c: data[:, i] for i, c in enumerate(FunctionalProfile.COLUMNS)}
    return FunctionalProfile(
        cols["r"], cols["H"], cols["I"], cols["Hdelta"], cols["Idelta"], cols["Phi"], cols["W"], cols["M"],
        np.array(meta["branch"]), meta["delta"], meta["kappa"], TruncationSpec(**tr), QuadSpec(**meta["quadrature"]),
        meta["per_decade"],
    )


# --------------------------------------------------------------------------
# Weiss, Monneau
# --------------------------------------------------------------------------


def weiss(u: Field, kappa: float, r: float, delta: float = 0.0, quad: QuadSpec = DEFAULT_QUAD) -> float:
    """``W(r) = r^(-2 kappa) (I(r) - kappa/2 H(r))``."""
    if not 0 < r < 1 + 1e-12:
        raise ValueError("r must lie in (0, 1)")
    H, I = H_I(u, r, delta, quad)
    return r ** (-2 * kappa) * (I - kappa / 2 * H)


def monneau(u: Field, p: PolySpec, kappa: float, r: float, quad: QuadSpec = DEFAULT_QUAD, check: bool = True) -> float:
    """``H_{u-p}(r) / r^(2 kappa)`` for ``p`` in ``P_kappa``."""
    from .catalog import in_class_P
    from .grid import PolyField, SumField

    if check:
        ok, why = in_class_P(p, int(round(kappa)) if float(kappa).is_integer() else None)
        if not ok:
            raise ValueError(f"polynomial is not in P_kappa: {why}")
    w = SumField([(1.0, u), (-1.0, PolyField(p))])
    return H_only(w, r, 0.0, quad) / r ** (2 * kappa)


# --------------------------------------------------------------------------
# differentiation formulas, log-Sobolev
# --------------------------------------------------------------------------


@dataclass
class DiffFormulaResidual:
    r: float
    dr: float
    H_fd: float
    H_rhs: float
    I_fd: float
    I_rhs: float

    @property
    def H_residual(self) -> float:
        return abs(self.H_fd - self.H_rhs)

    @property
    def I_residual(self) -> float:
        return abs(self.I_fd - self.I_rhs)


def _Zv(v: Field, x, t):
    return np.sum(x * v.grad(x, t), axis=-1) + 2 * t * v.dt(x, t)


def check_diff_formula(v: Field, g: Field, r: float, delta: float, dr: float = 1e-3,
                       quad: QuadSpec = DEFAULT_QUAD) -> DiffFormulaResidual:
    """Compare centered ``r``-derivatives of ``H^delta, I^delta`` with the formulas

    ``H' = 4 I/r - 4/r^3 int t v g G - 4/r^3 int_thin t v v_n G`` and
    ``I' = 1/r^3 int (Zv)^2 G + 2/r^3 int t Zv g G + 2/r^3 int_thin t v_n Zv G``,

    where ``g = Delta v - d_t v`` and ``v_n`` is the one-sided normal derivative.
    """
    Hp, Ip = H_I(v, r + dr, delta, quad)
    Hm, Im = H_I(v, r - dr, delta, quad)
    _, I0 = H_I(v, r, delta, quad)

    def vn(x, t):
        return v.grad(x, t)[..., -1]

    s1 = strip_integral(lambda x, t: t * v(x, t) * g(x, t), v, r, delta, quad)
    b1 = thin_integral(lambda x, t: t * v(x, t) * vn(x, t), v, r, delta, quad)
    H_rhs = 4 / r * I0 - 4 / r ** 3 * s1 - 4 / r ** 3 * b1
    s2 = strip_integral(lambda x, t: _Zv(v, x, t) ** 2, v, r, delta, quad)
    s3 = strip_integral(lambda x, t: t * _Zv(v, x, t) * g(x, t), v, r, delta, quad)
    b2 = thin_integral(lambda x, t: t * vn(x, t) * _Zv(v, x, t), v, r, delta, quad)
    I_rhs = s2 / r ** 3 + 2 / r ** 3 * s3 + 2 / r ** 3 * b2
    return DiffFormulaResidual(r, dr, (Hp - Hm) / (2 * dr), H_rhs, (Ip - Im) / (2 * dr), I_rhs)


def gauss_hermite_nodes(n: int, s: float, nodes: int = 48):
    """Tensor rule for ``int_{R^n} F G(., s) dx`` (``G`` has variance ``2|s|``)."""
    z, w = hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    x1 = math.sqrt(2 * abs(s)) * z
    grids = np.meshgrid(*([x1] * n), indexing="ij")
    x = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.prod(np.meshgrid(*([w] * n), indexing="ij"), axis=0).ravel()
    return x, W


def log_sobolev_gap(f: Callable, grad_f: Callable, n: int, s: float = -1.0, nodes: int = 48) -> float:
    """``(int f^2 G) log(int f^2 G) + 4|s| int |grad f|^2 G - int f^2 log f^2 G``.

    Integrals over all of ``R^n`` against ``G(., s)``; the gap is
    nonnegative by the Gaussian log-Sobolev inequality.
    """
    if not s < 0:
        raise ValueError("s must be negative")
    x, w = gauss_hermite_nodes(n, s, nodes)
    fv = np.asarray(f(x), dtype=float)
    gv = np.asarray(grad_f(x), dtype=float)
    if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(gv))):
        raise ValueError("non-integrable sample")
    f2 = fv * fv
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(f2 > 0, f2 * np.log(np.where(f2 > 0, f2, 1.0)), 0.0)
    m = float(np.sum(w * f2))
    mlog = m * math.log(m) if m > 0 else 0.0
    return mlog + 4 * abs(s) * float(np.sum(w * np.sum(gv * gv, axis=-1))) - float(np.sum(w * ent))
