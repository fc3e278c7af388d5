"""Parabolic half-cylinder grids and the :class:`Field` evaluation interface.

Every field maps points ``(x, t)`` with ``x`` of shape ``(..., n)`` and ``t``
broadcastable to ``(...)`` to values of shape ``(...)``. Grid samples and
closed forms share this interface, so the Gaussian functionals run on both.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import qmc

_EPS = 1e-12


class DomainError(ValueError):
    """Evaluation requested outside the declared domain of a field."""


class StencilError(DomainError):
    """A finite-difference stencil left the domain of the field."""


@dataclass(frozen=True)
class ParabolicPoint:
    x: tuple[float, ...]
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        if len(self.x) < 2:
            raise ValueError("spatial dimension must be at least 2")

    @property
    def n(self) -> int:
        return len(self.x)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.x), np.array(float(self.t))


def parabolic_norm(p: ParabolicPoint | tuple) -> float:
    """``(|x|^2 + |t|)^(1/2)``."""
    if isinstance(p, ParabolicPoint):
        x, t = p.x, p.t
    else:
        x, t = p
    x = np.asarray(x, dtype=float)
    return float(math.sqrt(float(np.dot(x, x)) + abs(float(t))))


def parabolic_norm_array(x, t) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.sum(x * x, axis=-1) + np.abs(t))


# --------------------------------------------------------------------------
# Grid
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-L, L]^(n-1) x [0, 1]`` times ``[t_start, t_end]``.

    The time range is half-open at the start: the level ``t_start`` is the
    initial slice, every later level carries interior/thin/lateral nodes.
    """

    n: int = 2
    h: float = 1.0 / 64
    dt: float | None = None
    x_extent: float = 1.0
    xn_extent: float = 1.0
    t_start: float = -1.0
    t_end: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.dt is None:
            object.__setattr__(self, "dt", self.h * self.h / 2)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name, ext in (("x_extent", self.x_extent), ("xn_extent", self.xn_extent)):
            cells = ext / self.h * (2 if name == "x_extent" else 1)
            if abs(cells - round(cells)) > 1e-9:
                raise ValueError(f"{name}={ext} is not a multiple of h={self.h}")
        steps = (self.t_end - self.t_start) / self.dt
        if abs(steps - round(steps)) > 1e-6:
            raise ValueError("time range is not a multiple of dt")

    # geometry ----------------------------------------------------------
    @property
    def n_tangential(self) -> int:
        return int(round(2 * self.x_extent / self.h)) + 1

    @property
    def n_normal(self) -> int:
        return int(round(self.xn_extent / self.h)) + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_tangential,) * (self.n - 1) + (self.n_normal,)

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    @property
    def axes(self) -> list[np.ndarray]:
        xt = np.linspace(-self.x_extent, self.x_extent, self.n_tangential)
        xn = np.linspace(0.0, self.xn_extent, self.n_normal)
        return [xt] * (self.n - 1) + [xn]

    @property
    def lower(self) -> np.ndarray:
        return np.array([-self.x_extent] * (self.n - 1) + [0.0])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_extent] * (self.n - 1) + [self.xn_extent])

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    # node classification ------------------------------------------------
    @cached_property
    def lateral_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        for d in range(self.n - 1):
            idx = [slice(None)] * self.n
            idx[d] = 0
            m[tuple(idx)] = True
            idx[d] = -1
            m[tuple(idx)] = True
        idx = [slice(None)] * self.n
        idx[-1] = -1
        m[tuple(idx)] = True
        return m

    @cached_property
    def thin_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[..., 0] = True
        return m & ~self.lateral_mask

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return ~(self.lateral_mask | self.thin_mask)

    def node_counts(self) -> dict[str, int]:
        """Space-time node counts per class; they sum to the total."""
        later = self.n_steps
        space = int(np.prod(self.shape))
        return {
            "initial": space,
            "lateral": later * int(self.lateral_mask.sum()),
            "thin": later * int(self.thin_mask.sum()),
            "interior": later * int(self.interior_mask.sum()),
            "total": space * (later + 1),
        }

    def contains(self, x, t, tol: float = _EPS) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xs = np.concatenate([x[..., :-1], np.abs(x[..., -1:])], axis=-1)
        inside = np.all((xs >= self.lower - tol) & (xs <= self.upper + tol), axis=-1)
        t = np.asarray(t, dtype=float)
        return inside & (t >= self.t_start - tol) & (t <= self.t_end + tol)

    # serialization -------------------------------------------------------
    def to_text(self) -> str:
        return (
            f"n = {self.n}\nh = {self.h!r}\ndt = {self.dt!r}\n"
            f"x_extent = {self.x_extent!r}\nxn_extent = {self.xn_extent!r}\n"
            f"t_start = {self.t_start!r}\nt_end = {self.t_end!r}\n"
        )

    @classmethod
    def from_mapping(cls, kv: dict) -> Grid:
        known = {"n", "h", "dt", "x_extent", "xn_extent", "t_start", "t_end"}
        bad = set(kv) - known
        if bad:
            raise ValueError(f"unknown grid keys: {sorted(bad)}")
        args = {k: (int(v) if k == "n" else _parse_number(v)) for k, v in kv.items()}
        return cls(**args)

    @classmethod
    def from_text(cls, text: str) -> Grid:
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition("=")
                kv[key.strip()] = value.strip()
        return cls.from_mapping(kv)


def _parse_number(v) -> float:
    if isinstance(v, (int, float)):
        return float(v)
    v = str(v).strip()
    if "/" in v:
        num, den = v.split("/", 1)
        return float(num) / float(den)
    return float(v)


# --------------------------------------------------------------------------
# Fields
# --------------------------------------------------------------------------


def _prep(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x.shape[:-1], t.shape)
    x = np.broadcast_to(x, shape + (x.shape[-1],))
    t = np.broadcast_to(t, shape)
    return x, t


class Field:
    """Base class: a function of ``(x, t)`` with optional derivatives.

    Subclasses implement ``_value``; ``grad`` and ``dt`` fall back to central
    differences of the value when not overridden.
    """

    n: int
    domain: str = "strip"  # "cylinder" | "strip"
    even: bool = True
    fd_step: float = 1e-5
    support_radius: float | None = None  # spatial support radius about the origin, if bounded

    def contains(self, x, t) -> np.ndarray:
        x, t = _prep(x, t)
        return t <= _EPS

    def __call__(self, x, t) -> np.ndarray:
        x, t = _prep(x, t)
        if not np.all(self.contains(x, t)):
            raise DomainError(f"{type(self).__name__}: evaluation outside domain")
        return self._value(x, t)

    def _value(self, x, t):  # pragma: no cover - abstract
        raise NotImplementedError

    def grad(self, x, t) -> np.ndarray:
        x, t = _prep(x, t)
        eta = self.fd_step
        out = np.empty(x.shape)
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = eta
            out[..., i] = (self(x + e, t) - self(x - e, t)) / (2 * eta)
        return out

    def dt(self, x, t) -> np.ndarray:
        x, t = _prep(x, t)
        eta = self.fd_step
        return (self(x, t) - self(x, t - 2 * eta)) / (2 * eta)

    def reflect(self, x) -> np.ndarray:
        """Mirror ``x_n -> -x_n``."""
        x = np.array(x, dtype=float, copy=True)
        x[..., -1] *= -1
        return x


class ClosedFormField(Field):
    """Field given by vectorized callables ``fn(x, t)`` (and optional derivatives)."""

    def __init__(
        self,
        fn: Callable,
        n: int,
        grad: Callable | None = None,
        dt: Callable | None = None,
        domain: str = "strip",
        even: bool = True,
        t_max: float = 0.0,
        name: str = "",
    ):
        self.fn = fn
        self.n = n
        self._grad = grad
        self._dt = dt
        self.domain = domain
        self.even = even
        self.t_max = t_max
        self.name = name

    def contains(self, x, t):
        x, t = _prep(x, t)
        return t <= self.t_max + _EPS

    def _value(self, x, t):
        return np.asarray(self.fn(x, t), dtype=float)

    def grad(self, x, t):
        if self._grad is None:
            return super().grad(x, t)
        x, t = _prep(x, t)
        if not np.all(self.contains(x, t)):
            raise DomainError("gradient outside domain")
        return np.asarray(self._grad(x, t), dtype=float)

    def dt(self, x, t):
        if self._dt is None:
            return super().dt(x, t)
        x, t = _prep(x, t)
        if not np.all(self.contains(x, t)):
            raise DomainError("time derivative outside domain")
        return np.asarray(self._dt(x, t), dtype=float)

    def __repr__(self):
        return f"ClosedFormField({self.name or self.fn!r}, n={self.n})"


class PolyField(ClosedFormField):
    """Float evaluator of an exact :class:`~parasig.poly.PolySpec`."""

    def __init__(self, poly, t_max: float = math.inf, name: str = ""):
        self.poly = poly
        grads = [poly.diff(i) for i in range(poly.n)]
        pt = poly.diff("t")
        super().__init__(
            poly.evaluate,
            poly.n,
            grad=lambda x, t: np.stack([g.evaluate(x, t) for g in grads], axis=-1),
            dt=pt.evaluate,
            even=poly.is_even_in_xn(),
            t_max=t_max,
            name=name or repr(poly),
        )


class GridField(Field):
    """Samples on a :class:`Grid` at stored time levels.

    Interpolation is multilinear in space and linear in time; the even
    extension in ``x_n`` is applied before lookup.
    """

    domain = "cylinder"

    def __init__(self, grid: Grid, times, values, name: str = ""):
        self.grid = grid
        self.n = grid.n
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.values.setflags(write=False)
        if self.values.shape != (len(self.times),) + grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != {(len(self.times),) + grid.shape}"
            )
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.name = name
        self.even = True

    def contains(self, x, t):
        x, t = _prep(x, t)
        inside = self.grid.contains(x, np.zeros(t.shape))
        return inside & (t >= self.times[0] - _EPS) & (t <= self.times[-1] + _EPS)

    # interpolation core ------------------------------------------------
    def _locate(self, x, t):
        g = self.grid
        xs = np.array(x, dtype=float, copy=True)
        xs[..., -1] = np.abs(xs[..., -1])
        idx, wts = [], []
        for d in range(self.n):
            s = (xs[..., d] - g.lower[d]) / g.h
            i0 = np.clip(np.floor(s).astype(int), 0, g.shape[d] - 2)
            idx.append(i0)
            wts.append(np.clip(s - i0, 0.0, 1.0))
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, max(len(self.times) - 2, 0))
        if len(self.times) > 1:
            tw = np.clip((t - self.times[k]) / (self.times[k + 1] - self.times[k]), 0.0, 1.0)
        else:
            tw = np.zeros(np.shape(t))
        return idx, wts, k, tw

    def _interp(self, arr, x, t):
        idx, wts, k, tw = self._locate(x, t)
        out = np.zeros(np.shape(t))
        nt = len(self.times)
        for corner in range(2 ** self.n):
            w = np.ones(np.shape(t))
            ii = []
            for d in range(self.n):
                bit = (corner >> d) & 1
                w = w * (wts[d] if bit else 1.0 - wts[d])
                ii.append(idx[d] + bit)
            if nt > 1:
                out = out + w * ((1.0 - tw) * arr[(k, *ii)] + tw * arr[(k + 1, *ii)])
            else:
                out = out + w * arr[(k, *ii)]
        return out

    def _value(self, x, t):
        return self._interp(self.values, x, t)

    @cached_property
    def nodal_gradient(self) -> np.ndarray:
        """Second-order nodal differences, one-sided at box faces."""
        h = self.grid.h
        grads = []
        for d in range(self.n):
            grads.append(np.gradient(self.values, h, axis=d + 1, edge_order=2))
        return np.stack(grads, axis=0)

    @cached_property
    def nodal_dt(self) -> np.ndarray:
        v = self.values
        if len(self.times) < 2:
            return np.zeros_like(v)
        out = np.empty_like(v)
        dts = np.diff(self.times).reshape((-1,) + (1,) * self.n)
        out[1:] = (v[1:] - v[:-1]) / dts
        out[0] = out[1]
        return out

    def grad(self, x, t):
        x, t = _prep(x, t)
        if not np.all(self.contains(x, t)):
            raise DomainError("gradient outside grid")
        g = np.stack([self._interp(self.nodal_gradient[d], x, t) for d in range(self.n)], axis=-1)
        g[..., -1] = np.where(x[..., -1] < 0, -g[..., -1], g[..., -1])
        return g

    def dt(self, x, t):
        x, t = _prep(x, t)
        if not np.all(self.contains(x, t)):
            raise DomainError("time derivative outside grid")
        return self._interp(self.nodal_dt, x, t)

    def level(self, t: float) -> int:
        """Index of the stored level closest to ``t``."""
        return int(np.argmin(np.abs(self.times - t)))

    def to_csv(self, path: str | Path, every: int = 1) -> Path:
        """Write ``x1,...,xn,t,value`` rows for stored nodes (level stride ``every``)."""
        path = Path(path)
        coords = self.grid.coords.reshape(-1, self.n)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(self.n)] + ["t", "value"])
            for k in range(0, len(self.times), every):
                vals = self.values[k].reshape(-1)
                tk = repr(float(self.times[k]))
                for c, v in zip(coords, vals):
                    w.writerow([repr(float(ci)) for ci in c] + [tk, repr(float(v))])
        return path

    def __repr__(self):
        return f"GridField({self.name!r}, levels={len(self.times)}, shape={self.grid.shape})"


class SumField(Field):
    """Linear combination ``sum c_i u_i``."""

    def __init__(self, terms: list[tuple[float, Field]]):
        self.terms = list(terms)
        self.n = self.terms[0][1].n
        self.even = all(f.even for _, f in self.terms)
        self.domain = "strip" if all(f.domain == "strip" for _, f in self.terms) else "cylinder"
        radii = [f.support_radius for _, f in self.terms]
        if all(r is not None for r in radii):
            self.support_radius = max(radii)

    def contains(self, x, t):
        out = np.ones(np.broadcast_shapes(np.shape(x)[:-1], np.shape(t)), dtype=bool)
        for _, f in self.terms:
            out &= f.contains(x, t)
        return out

    def _value(self, x, t):
        return sum(c * f._value(x, t) for c, f in self.terms)

    def grad(self, x, t):
        return sum(c * f.grad(x, t) for c, f in self.terms)

    def dt(self, x, t):
        return sum(c * f.dt(x, t) for c, f in self.terms)


class ShiftedField(Field):
    """``u(x0 + x, t0 + t)``: recenters a field at a free boundary point."""

    def __init__(self, base: Field, x0, t0: float = 0.0):
        self.base = base
        self.n = base.n
        self.x0 = np.asarray(x0, dtype=float)
        self.t0 = float(t0)
        self.even = base.even and self.x0[-1] == 0
        self.domain = base.domain
        if base.support_radius is not None:
            self.support_radius = base.support_radius + float(np.linalg.norm(self.x0))

    def contains(self, x, t):
        x, t = _prep(x, t)
        return self.base.contains(x + self.x0, t + self.t0)

    def _value(self, x, t):
        return self.base._value(x + self.x0, t + self.t0)

    def grad(self, x, t):
        x, t = _prep(x, t)
        return self.base.grad(x + self.x0, t + self.t0)

    def dt(self, x, t):
        x, t = _prep(x, t)
        return self.base.dt(x + self.x0, t + self.t0)


class ScaledField(Field):
    """``u(r x, r^2 t) / scale`` (parabolic dilation with normalization)."""

    def __init__(self, base: Field, r: float, scale: float = 1.0):
        if r <= 0:
            raise ValueError("r must be positive")
        self.base = base
        self.n = base.n
        self.r = float(r)
        self.scale = float(scale)
        self.even = base.even
        self.domain = base.domain
        if base.support_radius is not None:
            self.support_radius = base.support_radius / self.r

    def contains(self, x, t):
        x, t = _prep(x, t)
        return self.base.contains(self.r * x, self.r ** 2 * t)

    def _value(self, x, t):
        return self.base._value(self.r * x, self.r ** 2 * t) / self.scale

    def grad(self, x, t):
        x, t = _prep(x, t)
        return self.r * self.base.grad(self.r * x, self.r ** 2 * t) / self.scale

    def dt(self, x, t):
        x, t = _prep(x, t)
        return self.r ** 2 * self.base.dt(self.r * x, self.r ** 2 * t) / self.scale


class CutoffField(Field):
    """``w * psi`` on the half-strip; zero (without evaluating ``w``) off supp psi."""

    domain = "strip"

    def __init__(self, base: Field, cutoff):
        self.base = base
        self.cutoff = cutoff
        self.n = base.n
        self.even = base.even
        self.support_radius = cutoff.support

    def contains(self, x, t):
        x, t = _prep(x, t)
        inside = self.cutoff.support_mask(x)
        ok = np.ones(t.shape, dtype=bool)
        if np.any(inside):
            ok[inside] = self.base.contains(x[inside], t[inside])
        return ok & (t <= _EPS)

    def _value(self, x, t):
        out = np.zeros(t.shape)
        m = self.cutoff.support_mask(x)
        if np.any(m):
            out[m] = self.base._value(x[m], t[m]) * self.cutoff(x[m])
        return out

    def grad(self, x, t):
        x, t = _prep(x, t)
        out = np.zeros(x.shape)
        m = self.cutoff.support_mask(x)
        if np.any(m):
            xm, tm = x[m], t[m]
            w = self.base._value(xm, tm)
            out[m] = self.base.grad(xm, tm) * self.cutoff(xm)[..., None] + w[..., None] * self.cutoff.grad(xm)
        return out

    def dt(self, x, t):
        x, t = _prep(x, t)
        out = np.zeros(t.shape)
        m = self.cutoff.support_mask(x)
        if np.any(m):
            out[m] = self.base.dt(x[m], t[m]) * self.cutoff(x[m])
        return out


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def apply_Z(u: Field, p: ParabolicPoint, h_fd: float = 1e-3) -> float:
    """``Zu = x . grad u + 2 t du/dt`` at ``p``.

    Uses the scaling-generator form: a central difference in the dilation
    parameter of ``lambda -> u(lambda x, lambda^2 t)`` at ``lambda = 1``.
    """
    x, t = p.as_arrays()
    lo, hi = 1.0 - h_fd, 1.0 + h_fd
    pts = np.stack([lo * x, hi * x])
    ts = np.array([lo * lo * t, hi * hi * t])
    if not np.all(u.contains(pts, ts)):
        raise StencilError(f"Z stencil with h_fd={h_fd} leaves the domain at {p}")
    v = u(pts, ts)
    return float((v[1] - v[0]) / (2 * h_fd))


@dataclass(frozen=True)
class SubCylinder:
    """``B_r^+(x0) x (t0 - r^2, t0]``, the half-ball side ``x_n >= 0``."""

    x0: tuple[float, ...]
    t0: float
    r: float

    @property
    def n(self) -> int:
        return len(self.x0)


@dataclass
class HolderReport:
    exponent: float
    spatial: float
    temporal: float
    pairs: int

    @property
    def value(self) -> float:
        return self.spatial + self.temporal


def _sample_half_ball(region: SubCylinder, count: int, seed: int) -> np.ndarray:
    n = region.n
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    pts = []
    while sum(len(p) for p in pts) < count:
        raw = sampler.random(max(64, 2 * count))
        y = (2 * raw - 1) * region.r
        y[:, -1] = np.abs(y[:, -1])
        keep = np.linalg.norm(y, axis=1) <= region.r
        pts.append(y[keep])
    y = np.concatenate(pts)[:count]
    return y + np.asarray(region.x0)


def _pair_ratio_max(vals: np.ndarray, dist: np.ndarray, exponent: float) -> float:
    mask = dist > 1e-14
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(vals)[mask] / dist[mask] ** exponent))


def parabolic_holder_seminorm(
    u: Field,
    exponent: float,
    region: SubCylinder,
    sample_count: int = 256,
    time_count: int | None = None,
    seed: int = 0,
) -> HolderReport:
    """Sampled parabolic Hoelder seminorm of order ``exponent`` in (0, 2].

    For ``exponent = m + gamma`` with ``m in {0, 1}``: the spatial part is the
    gamma-Hoelder quotient of ``D^m u`` along time slices; the temporal part
    sums quotients of ``u`` (order ``exponent/2``) and, when ``m = 1``, of the
    gradient (order ``(exponent - 1)/2``) along fixed spatial points.
    """
    if not 0 < exponent <= 2:
        raise ValueError("exponent must lie in (0, 2]")
    if region.r <= 0:
        raise ValueError("empty region")
    m = 1 if exponent > 1 else 0
    gamma = exponent - m
    xs = _sample_half_ball(region, sample_count, seed)
    nt = time_count or max(8, int(round(math.sqrt(sample_count))))
    ts = region.t0 - region.r ** 2 * np.linspace(0.0, 1.0, nt)
    X = np.broadcast_to(xs[None, :, :], (nt,) + xs.shape)
    T = np.broadcast_to(ts[:, None], (nt, len(xs)))
    if not np.all(u.contains(X, T)):
        raise DomainError("region exceeds field domain")
    vals = u(X, T)  # (nt, ns)
    grads = u.grad(X, T) if m == 1 else None  # (nt, ns, n)

    dx = np.linalg.norm(xs[:, None, :] - xs[None, :, :], axis=-1)
    spatial = 0.0
    for k in range(nt):
        if m == 0:
            diff = vals[k][:, None] - vals[k][None, :]
            spatial = max(spatial, _pair_ratio_max(diff, dx, gamma))
        else:
            q = 0.0
            for i in range(u.n):
                g = grads[k, :, i]
                q += _pair_ratio_max(g[:, None] - g[None, :], dx, gamma)
            spatial = max(spatial, q)

    dtm = np.abs(ts[:, None] - ts[None, :])
    temporal = 0.0
    for j in range(len(xs)):
        v = vals[:, j]
        q = _pair_ratio_max(v[:, None] - v[None, :], dtm, exponent / 2)
        if m == 1:
            for i in range(u.n):
                g = grads[:, j, i]
                q += _pair_ratio_max(g[:, None] - g[None, :], dtm, gamma / 2)
        temporal = max(temporal, q)
    return HolderReport(exponent, spatial, temporal, len(xs) * (len(xs) - 1) // 2 * nt)


def field_to_csv(u: Field, path: str | Path, x, t) -> Path:
    """Sample ``u`` at given points and write ``x1,...,xn,t,value``."""
    x, t = _prep(x, t)
    vals = u(x, t).reshape(-1)
    xs = x.reshape(-1, x.shape[-1])
    ts = t.reshape(-1)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(xs.shape[1])] + ["t", "value"])
        for xi, ti, vi in zip(xs, ts, vals):
            w.writerow([repr(float(c)) for c in xi] + [repr(float(ti)), repr(float(vi))])
    return path
