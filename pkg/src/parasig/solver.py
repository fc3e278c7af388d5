"""Time-stepping solvers for the parabolic thin-obstacle problem.

Discretization: nodes on a uniform box grid, edge-based five-point (2n+1
point) Laplacian, half control volumes on the thin row ``x_n = 0``. Every
row is scaled so the spatial operator is symmetric:

    m_i (v_i - v_i^old)/dt + theta (L v)_i + (1-theta) (L v^old)_i + m_i f_i
        + [thin] flux_i / h = 0,

with ``m_i = 1/2`` on the thin row and 1 elsewhere. The thin flux is
``beta_eps(v - phi)`` for the penalized problem, or the multiplier of the
constraint ``v >= phi`` for the projected one. Interior unknowns are
eliminated with a sparse LU, leaving a dense problem on the thin row.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .grid import Field, Grid, GridField


class SolverError(RuntimeError):
    """Newton or projected iteration failed to converge."""


class IncompatibleData(ValueError):
    """Problem data violate the compatibility conditions."""


# --------------------------------------------------------------------------
# penalty
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PenaltySpec:
    """``beta_eps``: 0 for ``s >= 0``, ``eps + s/eps`` for ``s <= -2 eps^2``.

    On the bridge ``(-2 eps^2, 0)``, with ``tau = (s + 2 eps^2)/(2 eps^2)``,
    ``beta/eps = -1 + 2 tau - 2 tau^3 + tau^4`` (value, slope and curvature
    match at both knots; slope ``2 (1-tau)^2 (1+2 tau) / (2 eps) >= 0``).
    """

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def beta_eps(s, spec: PenaltySpec):
    s = np.asarray(s, dtype=float)
    e = spec.eps
    w = 2 * e * e
    tau = np.clip((s + w) / w, 0.0, 1.0)
    bridge = e * (-1 + 2 * tau - 2 * tau ** 3 + tau ** 4)
    out = np.where(s >= 0, 0.0, np.where(s <= -w, e + s / e, bridge))
    return out if out.ndim else float(out)


def beta_eps_prime(s, spec: PenaltySpec):
    s = np.asarray(s, dtype=float)
    e = spec.eps
    w = 2 * e * e
    tau = np.clip((s + w) / w, 0.0, 1.0)
    bridge = 2 * (1 - tau) ** 2 * (1 + 2 * tau) * e / w
    out = np.where(s >= 0, 0.0, np.where(s <= -w, 1.0 / e, bridge))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# problem
# --------------------------------------------------------------------------


def _zero(x, t):
    return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(t)))


@dataclass
class SignoriniProblem:
    """Data on ``Q_1^+``: obstacle ``phi`` (on the thin set), lateral values
    ``g``, initial values ``phi0`` and right-hand side ``f`` of
    ``Delta v - d_t v = f``. All are vectorized callables ``(x, t)``.
    """

    grid: Grid
    phi: Callable = _zero
    g: Callable = _zero
    phi0: Callable | None = None
    f: Callable = _zero
    name: str = ""
    check: bool = True

    def __post_init__(self):
        if self.phi0 is None:
            g = self.g
            t0 = self.grid.t_start
            self.phi0 = lambda x, t: g(x, np.full(np.shape(x)[:-1], t0))
        if self.check:
            self.check_compatibility()

    def check_compatibility(self, tol: float = 1e-10):
        gr = self.grid
        X = gr.coords
        t0 = gr.t_start
        lat = gr.lateral_mask
        init = np.asarray(self.phi0(X, t0), dtype=float)
        glat = np.asarray(self.g(X[lat], t0), dtype=float)
        scale = max(1.0, float(np.abs(init).max()))
        if np.max(np.abs(init[lat] - glat), initial=0.0) > tol * scale:
            raise IncompatibleData("initial data differ from lateral data at t_start")
        thin_row = X[..., 0, :]
        if np.min(init[..., 0] - self.phi(thin_row, t0)) < -tol * scale:
            raise IncompatibleData("initial data fall below the obstacle on the thin set")
        edge = lat[..., 0]
        if np.any(edge):
            xe = thin_row[edge]
            ts = gr.times
            T = np.broadcast_to(ts[:, None], (len(ts), len(xe)))
            Xe = np.broadcast_to(xe[None], (len(ts),) + xe.shape)
            gap = np.asarray(self.g(Xe, T)) - np.asarray(self.phi(Xe, T))
            if gap.min() < -tol * scale:
                raise IncompatibleData("lateral data fall below the obstacle on the thin edge")


def problem_from_field(grid: Grid, u: Field | Callable, name: str = "", phi: Callable = _zero) -> SignoriniProblem:
    """Boundary and initial data sampled from a global solution ``u``."""
    return SignoriniProblem(grid, phi=phi, g=u, f=_zero, name=name)


# --------------------------------------------------------------------------
# discretization
# --------------------------------------------------------------------------


class Discretization:
    """Sparse operators and the thin-row Schur complement for one (grid, theta)."""

    def __init__(self, grid: Grid, theta: float = 1.0, dense_limit: int = 1500):
        if not 0.5 <= theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        self.grid = grid
        self.theta = theta
        shape = grid.shape
        N = int(np.prod(shape))
        h = grid.h
        idx = np.arange(N).reshape(shape)
        on_thin_row = np.zeros(shape, dtype=bool)
        on_thin_row[..., 0] = True
        rows, cols, vals = [], [], []
        for d in range(grid.n):
            a = [slice(None)] * grid.n
            b = [slice(None)] * grid.n
            a[d] = slice(0, -1)
            b[d] = slice(1, None)
            i = idx[tuple(a)].ravel()
            j = idx[tuple(b)].ravel()
            w = np.ones(i.shape)
            if d < grid.n - 1:
                w[on_thin_row[tuple(a)].ravel()] = 0.5
            w = w / (h * h)
            rows += [i, j, i, j]
            cols += [i, j, j, i]
            vals += [w, w, -w, -w]
        self.L = sps.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        )
        self.mass = np.where(on_thin_row, 0.5, 1.0).ravel()
        self.T = idx[grid.thin_mask]
        self.I = idx[grid.interior_mask]
        self.B = idx[grid.lateral_mask]
        self.dense = len(self.T) <= dense_limit
        self._dt = None

    def prepare(self, dt: float):
        if self._dt == dt:
            return
        L, th = self.L, self.theta
        U = np.concatenate([self.T, self.I])
        self.U = U
        A = (sps.diags(self.mass[U] / dt) + th * L[U][:, U]).tocsc()
        self.A = A
        self.A_UB = (th * L[U][:, self.B]).tocsr()
        nT = len(self.T)
        self.nT = nT
        if self.dense:
            A_II = A[nT:, nT:].tocsc()
            self.lu_I = spla.splu(A_II, permc_spec="MMD_AT_PLUS_A")
            A_IT = A[nT:, :nT].toarray()
            self.A_TI = A[:nT, nT:].tocsr()
            self.A_IT = A[nT:, :nT].tocsr()
            X = self.lu_I.solve(A_IT)
            self.X_IT = X
            self.S = A[:nT, :nT].toarray() - self.A_TI @ X
            self.S = 0.5 * (self.S + self.S.T)
        else:
            self.A_csr = A.tocsr()
        self._dt = dt

    def energy(self, v_full: np.ndarray) -> float:
        """Discrete Dirichlet energy ``(h^n / 2) v^T L v``."""
        return 0.5 * self.grid.h ** self.grid.n * float(v_full @ (self.L @ v_full))


# --------------------------------------------------------------------------
# inner solvers
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def _psor_dense(S, c, phi, v, omega, tol, max_iter):
    n = len(c)
    for it in range(max_iter):
        delta = 0.0
        for i in range(n):
            r = c[i]
            for j in range(n):
                r -= S[i, j] * v[j]
            new = v[i] + omega * r / S[i, i]
            if new < phi[i]:
                new = phi[i]
            d = abs(new - v[i])
            if d > delta:
                delta = d
            v[i] = new
        if delta <= tol:
            return it + 1
    return -1


@numba.njit(cache=True)
def _psor_csr(indptr, indices, data, diag, c, lower, v, omega, tol, max_iter):
    n = len(c)
    for it in range(max_iter):
        delta = 0.0
        for i in range(n):
            r = c[i]
            for k in range(indptr[i], indptr[i + 1]):
                r -= data[k] * v[indices[k]]
            new = v[i] + omega * r / diag[i]
            if new < lower[i]:
                new = lower[i]
            d = abs(new - v[i])
            if d > delta:
                delta = d
            v[i] = new
        if delta <= tol:
            return it + 1
    return -1


def _newton_dense(S, c, phi, v0, spec: PenaltySpec, h: float, tol: float, max_iter: int = 60):
    v = v0.copy()

    def F(v):
        return S @ v + beta_eps(v - phi, spec) / h - c

    r = F(v)
    nr = np.linalg.norm(r)
    for it in range(max_iter):
        if np.abs(r).max() <= tol:
            return v, it
        J = S + np.diag(beta_eps_prime(v - phi, spec) / h)
        dv = sla.solve(J, -r, assume_a="pos", check_finite=False)
        lam = 1.0
        while True:
            vn = v + lam * dv
            rn = F(vn)
            nrn = np.linalg.norm(rn)
            if nrn <= (1 - 1e-4 * lam) * nr or lam < 1e-6:
                break
            lam *= 0.5
        if np.abs(lam * dv).max() <= 1e-15 * max(1.0, np.abs(v).max()):
            v, r = vn, rn
            return v, it + 1
        v, r, nr = vn, rn, nrn
    if np.abs(r).max() <= tol:
        return v, max_iter
    raise SolverError(f"Newton did not converge: residual {np.abs(r).max():.3e} > {tol:.3e}")


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class ComplementarityReport:
    penetration: float
    positive_flux: float
    complementarity: float
    scheme_positive_flux: float | None = None
    scheme_complementarity: float | None = None
    interior_residual: float | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class SolveReport:
    field: GridField
    method: str
    eps: float | None
    iterations: np.ndarray
    residuals: ComplementarityReport
    min_gap: float
    energy_times: np.ndarray
    energy: np.ndarray
    elapsed: float
    cauchy: list[float] = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    @property
    def penetration(self) -> float:
        return max(0.0, -self.min_gap)


# --------------------------------------------------------------------------
# time stepping
# --------------------------------------------------------------------------


_DISC_CACHE: dict = {}


def get_discretization(grid: Grid, theta: float = 1.0) -> Discretization:
    key = (grid, theta)
    if key not in _DISC_CACHE:
        if len(_DISC_CACHE) > 8:
            _DISC_CACHE.clear()
        _DISC_CACHE[key] = Discretization(grid, theta)
    disc = _DISC_CACHE[key]
    disc.prepare(grid.dt)
    return disc


def _keep_level(t_k: float, t_last: float, dt: float, ratio: float) -> bool:
    return t_k - t_last >= max(dt, abs(t_k) * ratio) * (1 - 1e-9)


def _march(prob: SignoriniProblem, method: str, spec: PenaltySpec | None, theta: float,
           store: str, omega: float, psor_tol: float, newton_tol: float, log_ratio: float):
    grid = prob.grid
    disc = get_discretization(grid, theta)
    h, dt = grid.h, grid.dt
    X = grid.coords.reshape(-1, grid.n)
    shape = grid.shape
    T, B, U = disc.T, disc.B, disc.U
    nT = disc.nT
    XT, XB, XU = X[T], X[B], X[U]
    mU = disc.mass[U]
    times = grid.times

    v = np.asarray(prob.phi0(X, times[0]), dtype=float).ravel().copy()
    f_old = np.asarray(prob.f(XU, times[0]), dtype=float)
    kept_t, kept_v = [times[0]], [v.reshape(shape).copy()]
    energies = [disc.energy(v)]
    iters = np.zeros(len(times) - 1, dtype=int)
    min_gap = float(np.min(v[T] - prob.phi(XT, times[0]))) if nT else 0.0
    nodes_per_slice = len(X)
    for k in range(1, len(times)):
        t = times[k]
        v_old = v
        gB = np.asarray(prob.g(XB, t), dtype=float)
        f_new = np.asarray(prob.f(XU, t), dtype=float)
        b = mU * v_old[U] / dt - disc.A_UB @ gB - mU * (theta * f_new + (1 - theta) * f_old)
        if theta < 1:
            b -= (1 - theta) * (disc.L @ v_old)[U]
        phiT = np.asarray(prob.phi(XT, t), dtype=float)
        if disc.dense:
            bT, bI = b[:nT], b[nT:]
            y = disc.lu_I.solve(bI)
            c = bT - disc.A_TI @ y
            vT0 = v_old[T]
            if method == "penalized":
                scale = max(1.0, float(np.abs(c).max()))
                vT, it = _newton_dense(disc.S, c, phiT, vT0, spec, h, newton_tol * scale)
            else:
                vT = np.maximum(vT0.copy(), phiT)
                it = _psor_dense(disc.S, c, phiT, vT, omega, psor_tol, 10 * nodes_per_slice)
                if it < 0:
                    raise SolverError(f"PSOR iteration cap exceeded at step {k} (t={t:.6f})")
            vI = y - disc.X_IT @ vT
            vU = np.concatenate([vT, vI])
        else:
            vU, it = _solve_full(disc, b, phiT, v_old[U], method, spec, h, omega, psor_tol, newton_tol, nodes_per_slice, k, t)
        iters[k - 1] = it
        v = np.empty_like(v_old)
        v[U] = vU
        v[B] = gB
        f_old = f_new
        if nT:
            min_gap = min(min_gap, float(np.min(v[T] - phiT)))
        energies.append(disc.energy(v))
        last = k == len(times) - 1
        if store == "all" or last or _keep_level(t, kept_t[-1], dt, log_ratio):
            if store != "all" and kept_t[-1] < times[k - 1] - 1e-15:
                kept_t.append(times[k - 1])
                kept_v.append(v_old.reshape(shape).copy())
            kept_t.append(t)
            kept_v.append(v.reshape(shape).copy())
    fieldv = GridField(grid, np.array(kept_t), np.stack(kept_v), name=f"{method}:{prob.name}")
    return fieldv, iters, min_gap, times, np.array(energies)


def _solve_full(disc, b, phiT, vU0, method, spec, h, omega, psor_tol, newton_tol, nodes_per_slice, k, t):
    """Unreduced sparse path for large thin rows (n = 3)."""
    A = disc.A_csr
    nT = disc.nT
    if method == "penalized":
        v = vU0.copy()
        scale = max(1.0, float(np.abs(b).max()))
        for it in range(60):
            r = A @ v - b
            r[:nT] += beta_eps(v[:nT] - phiT, spec) / h
            if np.abs(r).max() <= newton_tol * scale:
                return v, it
            J = A + sps.diags(np.concatenate([beta_eps_prime(v[:nT] - phiT, spec) / h, np.zeros(len(v) - nT)]))
            v = v + spla.spsolve(J.tocsc(), -r)
        raise SolverError(f"Newton did not converge at step {k} (t={t:.6f})")
    lower = np.concatenate([phiT, np.full(len(vU0) - nT, -np.inf)])
    v = np.maximum(vU0.copy(), lower)
    it = _psor_csr(A.indptr, A.indices, A.data, A.diagonal(), b, lower, v, omega, psor_tol, 10 * nodes_per_slice)
    if it < 0:
        raise SolverError(f"PSOR iteration cap exceeded at step {k} (t={t:.6f})")
    return v, it


def solve_penalized(prob: SignoriniProblem, spec: PenaltySpec, theta: float = 1.0, store: str = "log",
                    newton_tol: float = 1e-12, log_ratio: float = 1 / 32) -> SolveReport:
    """Penalized problem: thin condition ``d_{x_n} v = beta_eps(v - phi)``, damped Newton per step."""
    t0 = time.perf_counter()
    fieldv, iters, min_gap, times, energy = _march(prob, "penalized", spec, theta, store, 1.5, 0.0, newton_tol, log_ratio)
    res = residual_complementarity(fieldv, prob, theta=theta)
    return SolveReport(fieldv, "penalized", spec.eps, iters, res, min_gap, times, energy,
                       time.perf_counter() - t0, parameters={"eps": spec.eps, "theta": theta, "newton_tol": newton_tol})


def solve_projected(prob: SignoriniProblem, omega: float = 1.5, tol: float = 1e-12, theta: float = 1.0,
                    store: str = "log", log_ratio: float = 1 / 32) -> SolveReport:
    """Exact complementarity at thin nodes by projected SOR on the reduced system."""
    if not 0 < omega < 2:
        raise ValueError("omega must lie in (0, 2)")
    t0 = time.perf_counter()
    fieldv, iters, min_gap, times, energy = _march(prob, "projected", None, theta, store, omega, tol, 0.0, log_ratio)
    res = residual_complementarity(fieldv, prob, theta=theta)
    return SolveReport(fieldv, "projected", None, iters, res, min_gap, times, energy,
                       time.perf_counter() - t0, parameters={"omega": omega, "psor_tol": tol, "theta": theta})


def penalty_continuation(prob: SignoriniProblem, schedule, theta: float = 1.0, store: str = "log") -> SolveReport:
    """Penalized solves along a decreasing ``eps`` schedule.

    The factorizations are shared across the schedule; ``cauchy`` holds the
    sup-differences between consecutive runs over their stored levels.
    """
    schedule = [float(e) for e in schedule]
    if not schedule or any(e <= 0 for e in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("schedule must be positive and strictly decreasing")
    prev, cauchy, rep = None, [], None
    for e in schedule:
        rep = solve_penalized(prob, PenaltySpec(e), theta=theta, store=store)
        if prev is not None:
            cauchy.append(sup_difference(prev.field, rep.field))
        prev = rep
    rep.cauchy = cauchy
    rep.parameters["schedule"] = schedule
    return rep


def sup_difference(a: GridField, b: GridField) -> float:
    """Max nodal difference over the stored levels the two fields share."""
    common, ia, ib = np.intersect1d(np.round(a.times, 12), np.round(b.times, 12), return_indices=True)
    if len(common) == 0:
        raise ValueError("fields share no stored levels")
    return float(np.abs(a.values[ia] - b.values[ib]).max())


def sup_error(v: GridField, exact: Callable) -> float:
    """Max nodal error against a closed form over the stored levels."""
    X = v.grid.coords
    err = 0.0
    for k, t in enumerate(v.times):
        err = max(err, float(np.abs(v.values[k] - exact(X, t)).max()))
    return err


# --------------------------------------------------------------------------
# residuals
# --------------------------------------------------------------------------


def one_sided_flux(values: np.ndarray, h: float) -> np.ndarray:
    """``(-3 v0 + 4 v1 - v2)/(2h)`` along the last axis at ``x_n = 0``."""
    return (-3 * values[..., 0] + 4 * values[..., 1] - values[..., 2]) / (2 * h)


def scheme_flux(v: GridField, prob: SignoriniProblem, k: int, theta: float = 1.0) -> np.ndarray | None:
    """Thin flux implied by the discrete balance at stored level ``k``.

    Needs level ``k - 1`` stored one time step earlier; returns None otherwise.
    Equals the penalty ``beta_eps(v - phi)`` (or minus ``h`` times the
    projected multiplier) up to the solver tolerance.
    """
    grid = prob.grid
    if k < 1 or abs((v.times[k] - v.times[k - 1]) - grid.dt) > 1e-9 * grid.dt:
        return None
    disc = get_discretization(grid, theta)
    X = grid.coords.reshape(-1, grid.n)
    T = disc.T
    vn, vo = v.values[k].ravel(), v.values[k - 1].ravel()
    Ln, Lo = disc.L @ vn, disc.L @ vo
    fn = np.asarray(prob.f(X[T], v.times[k]), dtype=float)
    fo = np.asarray(prob.f(X[T], v.times[k - 1]), dtype=float)
    m = disc.mass[T]
    row = m * (vn[T] - vo[T]) / grid.dt + theta * Ln[T] + (1 - theta) * Lo[T] + m * (theta * fn + (1 - theta) * fo)
    return -grid.h * row


def residual_complementarity(v: GridField, prob: SignoriniProblem, theta: float = 1.0) -> ComplementarityReport:
    """Node-wise maxima of the thin Signorini residuals over stored levels.

    The primary flux is the one-sided second-order difference; the
    scheme-consistent flux and the interior heat residual are reported
    alongside when consecutive levels are stored.
    """
    grid = prob.grid
    thin = grid.thin_mask[..., 0]
    xt = grid.coords[..., 0, :][thin]
    pen = pos = comp = 0.0
    s_pos = s_comp = None
    interior = None
    disc = get_discretization(grid, theta)
    X = grid.coords.reshape(-1, grid.n)
    for k, t in enumerate(v.times):
        vals = v.values[k]
        trace = vals[..., 0][thin]
        gap = trace - np.asarray(prob.phi(xt, t), dtype=float)
        flux = one_sided_flux(vals, grid.h)[thin]
        pen = max(pen, float(np.maximum(-gap, 0).max(initial=0.0)))
        pos = max(pos, float(np.maximum(flux, 0).max(initial=0.0)))
        comp = max(comp, float(np.abs(gap * flux).max(initial=0.0)))
        sf = scheme_flux(v, prob, k, theta)
        if sf is not None:
            s_pos = max(s_pos or 0.0, float(np.maximum(sf, 0).max(initial=0.0)))
            s_comp = max(s_comp or 0.0, float(np.abs(gap * sf).max(initial=0.0)))
            vn, vo = v.values[k].ravel(), v.values[k - 1].ravel()
            Ii = disc.I
            fn = np.asarray(prob.f(X[Ii], t), dtype=float)
            fo = np.asarray(prob.f(X[Ii], v.times[k - 1]), dtype=float)
            r = (vn[Ii] - vo[Ii]) / grid.dt + theta * (disc.L @ vn)[Ii] + (1 - theta) * (disc.L @ vo)[Ii] + theta * fn + (1 - theta) * fo
            scale = max(1.0, float(np.abs(vn).max())) / grid.dt
            interior = max(interior or 0.0, float(np.abs(r).max(initial=0.0)) / scale)
    return ComplementarityReport(pen, pos, comp, s_pos, s_comp, interior)
