"""Experiment configs, pipelines and artifact directories."""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import platform
import re
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import sympy as sp

from . import __version__
from .catalog import (
    CatalogSolution,
    Cutoff,
    suite_catalog,
    caloric_extend,
    check_catalog_solution,
    in_class_P,
    monneau_positive_polynomial,
    subtract_obstacle,
    timelike_polynomial,
)
from .classify import (
    PointClassification,
    Thresholds,
    centered_subtraction,
    classification_centers,
    classify_kappa,
    classify_point,
    contact_density,
    density_radii,
    estimate_kappa,
    extract_free_boundary,
    fit_singular_polynomial,
    growth_constant_variation,
    H_slope,
    pointwise_growth,
    reliable_window,
    singular_spatial_dimension,
)
from .functionals import (
    DEFAULT_QUAD,
    TruncationSpec,
    check_diff_formula,
    frequency_profile,
    log_r_grid,
    log_sobolev_gap,
    monneau,
    weiss,
    write_profile_csv,
)
from .grid import Grid, GridField, PolyField, SubCylinder, parabolic_holder_seminorm
from .poly import PolySpec
from .solver import PenaltySpec, problem_from_field, solve_penalized, solve_projected, sup_difference, sup_error
from .whitney import (
    JetFamily,
    check_compatibility,
    jet_indices,
    partition_of_unity,
    whitney_decompose,
    whitney_extend,
)

KINDS = ("solve", "frequency", "weiss_monneau", "classify", "whitney", "catalog_check")
PRESETS = {"coarse": Fraction(1, 64), "fine": Fraction(1, 128)}


class ConfigError(ValueError):
    """Invalid configuration, with the offending file line when known."""


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


_H_EXPR = re.compile(r"^\s*([0-9.]+(?:/[0-9.]+)?)?\s*\*?\s*h\s*$")


def parse_number(text: str, h: float | None = None) -> float:
    """``0.5``, ``1/64`` or a multiple of the mesh size such as ``4h``."""
    text = text.strip()
    m = _H_EXPR.match(text)
    if m:
        if h is None:
            raise ValueError(f"{text!r} refers to h but no mesh size is set")
        return float(Fraction(m.group(1) or "1")) * h
    return float(Fraction(text))


def parse_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


@dataclass
class ExperimentConfig:
    """A parsed experiment config; every option is kept as text in ``sections``."""

    kind: str
    task: str
    name: str
    seed: int
    sections: dict
    lines: dict = field(default_factory=dict, repr=False)
    source: str = "<string>"

    def get(self, section: str, key: str, default=None) -> str | None:
        return self.sections.get(section, {}).get(key, default)

    def where(self, section: str, key: str) -> str:
        ln = self.lines.get((section, key))
        return f"{self.source}:{ln}" if ln else self.source

    def error(self, section: str, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{self.where(section, key)}: [{section}] {key}: {msg}")

    def number(self, section: str, key: str, default=None, h: float | None = None) -> float | None:
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return parse_number(raw, h)
        except (ValueError, ZeroDivisionError) as exc:
            raise self.error(section, key, f"not a number ({exc})") from None

    def integer(self, section: str, key: str, default=None) -> int | None:
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise self.error(section, key, f"not an integer: {raw!r}") from None

    def numbers(self, section: str, key: str, default=None, h: float | None = None) -> list[float] | None:
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return [parse_number(s, h) for s in parse_list(raw)]
        except (ValueError, ZeroDivisionError) as exc:
            raise self.error(section, key, f"bad number list ({exc})") from None

    def words(self, section: str, key: str, default=None) -> list[str] | None:
        raw = self.get(section, key)
        return default if raw is None else parse_list(raw)

    @property
    def h_list(self) -> list[float]:
        hs = self.numbers("grid", "h_list")
        if hs is None:
            hs = [self.number("grid", "h", 1 / 64)]
        for h in hs:
            if not 0 < h <= 0.25:
                raise self.error("grid", "h", f"mesh size {h} outside (0, 1/4]")
        return hs

    @property
    def h(self) -> float:
        return self.h_list[-1]

    def grid(self, h: float | None = None) -> Grid:
        n = self.integer("grid", "n", 2)
        if n not in (2, 3):
            raise self.error("grid", "n", "only n = 2 or 3 is supported")
        return Grid(n=n, h=self.h if h is None else h)

    def truncation(self, M: float = 0.0) -> TruncationSpec:
        return TruncationSpec(
            ell0=self.number("truncation", "ell0", 6.0),
            M=M,
            C=self.number("truncation", "C", 0.0),
            sigma=self.number("truncation", "sigma", 1.0),
            C_mu=self.number("truncation", "C_mu", 1.0),
        )

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec, kv in self.sections.items():
            cp[sec] = dict(kv)
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)


_TASKS = {
    "catalog_check": ("catalog",),
    "frequency": ("profile", "monotonicity", "diff_formula", "log_sobolev"),
    "weiss_monneau": ("weiss", "monneau"),
    "classify": ("suite", "growth", "spatial_dimension"),
    "solve": ("single", "cross_validation"),
    "whitney": ("extension",),
}


def _line_map(text: str) -> dict:
    out, section = {}, None
    for ln, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section and "=" in s and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip())] = ln
    return out


def parse_config(text: str, source: str = "<string>", preset: str | None = None) -> ExperimentConfig:
    """Parse INI text; errors carry ``source:line``.

    A preset replaces the mesh size: ``coarse`` is ``h = 1/64`` and ``fine``
    halves every mesh size of the coarse setting.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.ParsingError as exc:
        ln = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{source}:{ln}: malformed line") from None
    except configparser.Error as exc:
        ln = getattr(exc, "lineno", "?")
        raise ConfigError(f"{source}:{ln}: {exc.message if hasattr(exc, 'message') else exc}") from None
    lines = _line_map(text)
    sections = {s: dict(cp[s]) for s in cp.sections()}
    if "experiment" not in sections:
        raise ConfigError(f"{source}:1: missing [experiment] section")
    exp = sections["experiment"]

    def err(key, msg):
        ln = lines.get(("experiment", key), 1)
        return ConfigError(f"{source}:{ln}: [experiment] {key}: {msg}")

    kind = exp.get("kind")
    if kind not in KINDS:
        raise err("kind", f"must be one of {', '.join(KINDS)}; got {kind!r}")
    task = exp.get("task", _TASKS[kind][0])
    if task not in _TASKS[kind]:
        raise err("task", f"kind {kind} supports tasks {', '.join(_TASKS[kind])}; got {task!r}")
    try:
        seed = int(exp.get("seed", "0"))
    except ValueError:
        raise err("seed", "not an integer") from None
    name = exp.get("name", Path(source).stem)
    cfg = ExperimentConfig(kind, task, name, seed, sections, lines, source)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        g = sections.setdefault("grid", {})
        scale = PRESETS[preset] / Fraction(1, 64)
        if "h_list" in g:
            hs = [Fraction(parse_number(s)).limit_denominator(4096) * scale for s in parse_list(g["h_list"])]
            g["h_list"] = ", ".join(str(x) for x in hs)
        else:
            g["h"] = str(PRESETS[preset])
        exp["preset"] = preset
    cfg.h_list  # validate mesh sizes early
    return cfg


def load_config(path, preset: str | None = None) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path), preset)


# --------------------------------------------------------------------------
# shared pieces
# --------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    tol: float
    detail: str = ""

    def as_dict(self) -> dict:
        v = self.value
        return {"name": self.name, "passed": bool(self.passed), "value": None if v is None or not math.isfinite(v) else float(v),
                "tol": float(self.tol), "detail": self.detail}


@dataclass
class Outcome:
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, name, passed, value, tol, detail=""):
        self.checks.append(Check(name, bool(passed), float(value) if value is not None else math.nan, tol, detail))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def parse_solution(spec: str, n: int = 2) -> CatalogSolution:
    """``kind`` or ``kind:m``."""
    kind, _, m = spec.partition(":")
    return CatalogSolution(kind.strip(), m=int(m) if m else 1, n=n)


_SOLVE_CACHE: dict = {}


def solver_run(kind: str, h: float, method: str = "projected", eps: float | None = None, n: int = 2):
    """Solver reproduction of a catalog solution from its boundary data (memoized)."""
    key = (kind, n, float(h), method, eps)
    if key not in _SOLVE_CACHE:
        sol = parse_solution(kind, n)
        prob = problem_from_field(Grid(n=n, h=h), sol.field(), kind)
        if method == "projected":
            rep = solve_projected(prob)
        elif method == "penalized":
            rep = solve_penalized(prob, PenaltySpec(eps))
        else:
            raise ValueError(f"unknown method {method!r}")
        _SOLVE_CACHE[key] = (prob, rep)
    return _SOLVE_CACHE[key]


def poly_from_expr(text: str, n: int) -> PolySpec:
    """Exact :class:`PolySpec` from an expression in ``x1..xn`` and ``t``."""
    gens = sp.symbols(" ".join(f"x{i + 1}" for i in range(n)) + " t")
    expr = sp.sympify(text, locals={str(g): g for g in gens}, rational=True)
    poly = sp.Poly(sp.expand(expr), *gens)
    terms = {(tuple(mon[:-1]), mon[-1]): Fraction(int(c.p), int(c.q)) for mon, c in poly.terms()}
    return PolySpec(n, terms)


def _zero_obstacle(n: int) -> PolySpec:
    return PolySpec.zero(n)


def _write_rows(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_final_level(v: GridField, path: Path) -> Path:
    coords = v.grid.coords.reshape(-1, v.n)
    vals = v.values[-1].reshape(-1)
    t = float(v.times[-1])
    return _write_rows(path, [f"x{i + 1}" for i in range(v.n)] + ["t", "value"],
                       ([*c, t, val] for c, val in zip(coords, vals)))


def centered_field(v: GridField, center, cfg: ExperimentConfig, t0: float = 0.0):
    cut = Cutoff()
    sub = centered_subtraction(v, _zero_obstacle(v.n), center, int(cfg.number("truncation", "ell0", 6.0)), t0, cut)
    return sub, cfg.truncation(sub.M), cut


# --------------------------------------------------------------------------
# tasks
# --------------------------------------------------------------------------


def task_catalog(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    tol = cfg.number("tolerances", "catalog", 1e-10)
    n = cfg.integer("grid", "n", 2)
    rows = []
    sols = [parse_solution(s, n) for s in cfg.words("problem", "solutions")] if cfg.get("problem", "solutions") else suite_catalog(n)
    for sol in sols:
        for chk in check_catalog_solution(sol, seed=cfg.seed, tol=tol):
            rows.append([sol.kind, sol.m, chk.name, chk.passed, chk.value, chk.tol])
            res.add(f"{chk.name}[m={sol.m}]", chk.passed, chk.value, chk.tol)
    max_deg = cfg.integer("problem", "max_degree", 8)
    sym_fail = []
    for deg in range(0, max_deg + 1):
        for j in range(deg // 2 + 1):
            for k in range(deg - 2 * j + 1):
                alpha = [0] * n
                alpha[0] = k
                q = PolySpec.monomial(n, alpha, j)
                if n == 2 and k != deg - 2 * j:
                    continue
                if not caloric_extend(q).is_caloric():
                    sym_fail.append(f"caloric_extend deg {deg}")
        if deg % 2 == 0 and deg >= 2:
            if not timelike_polynomial(deg // 2, 1, n).is_caloric():
                sym_fail.append(f"timelike deg {deg}")
            if not monneau_positive_polynomial(n, deg // 2).is_caloric():
                sym_fail.append(f"monneau_positive deg {deg}")
    res.add(f"symbolic caloric, degrees <= {max_deg}", not sym_fail, len(sym_fail), 0, "; ".join(sym_fail))
    res.files.append(_write_rows(out / "catalog_checks.csv", ["kind", "m", "check", "passed", "value", "tol"], rows))
    return res


def task_profile(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    r = log_r_grid(cfg.number("radii", "r_min", 0.05), cfg.number("radii", "r_max", 0.5), cfg.integer("radii", "per_decade", 64))
    tol = cfg.number("tolerances", "phi", 0.02)
    trunc = TruncationSpec(ell0=cfg.number("truncation", "ell0", 6.0), M=0.0, C=0.0)
    for spec in cfg.words("problem", "solutions"):
        sol = parse_solution(spec, n)
        prof = frequency_profile(sol.field(), trunc, r, delta=cfg.number("radii", "delta", 0.125), kappa=sol.kappa)
        res.files.append(write_profile_csv(prof, out / f"profile_{spec.replace(':', '_m')}.csv"))
        dev = float(np.max(np.abs(prof.Phi - sol.kappa)))
        res.add(f"Phi = {sol.kappa} for {spec}", dev <= tol, dev, tol)
    return res


def task_monotonicity(cfg: ExperimentConfig, out: Path) -> Outcome:
    """Near-monotonicity of the generalized frequency on solver reproductions."""
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    tol = cfg.number("tolerances", "monotone", 0.01)
    per = cfg.integer("radii", "per_decade", 64)
    for spec in cfg.words("problem", "solutions"):
        worst = []
        for h in cfg.h_list:
            _, rep = solver_run(spec, h, n=n)
            sub, trunc, _ = centered_field(rep.field, np.zeros(n), cfg)
            r = log_r_grid(cfg.number("radii", "r_min", h=h, default=4 * h), cfg.number("radii", "r_max", 0.5), per)
            prof = frequency_profile(sub.u, trunc, r, delta=cfg.number("radii", "delta", 0.125))
            res.files.append(write_profile_csv(prof, out / f"profile_{spec}_h{round(1 / h)}.csv"))
            drop = float(np.max(np.maximum(prof.Phi[:-1] - prof.Phi[1:], 0.0)))
            ec = np.exp(trunc.C * prof.r ** trunc.sigma)
            raw = (prof.Phi - 2 * (ec - 1)) / ec
            raw_drop = float(np.max(np.maximum(raw[:-1] - raw[1:], 0.0)))
            worst.append(drop)
            res.add(f"{spec} h=1/{round(1 / h)}: max drop of Phi", drop <= tol, drop, tol,
                    f"drop without the C-term {raw_drop:.3g}")
        if len(worst) > 1:
            ok = all(b <= a + 1e-12 for a, b in zip(worst, worst[1:]))
            res.add(f"{spec}: violations shrink under refinement", ok, worst[-1] - worst[0], 0.0,
                    ", ".join(f"{w:.3g}" for w in worst))
    return res


def task_diff_formula(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    radii = cfg.numbers("radii", "r", [0.1, 0.2, 0.3])
    drs = cfg.numbers("radii", "dr", [0.02, 0.01, 0.005])
    delta = cfg.number("radii", "delta", 0.125)
    min_order = cfg.number("tolerances", "order", 0.9)
    quad = DEFAULT_QUAD.doubled()
    rows = []
    for text in [s.strip() for s in cfg.get("problem", "polynomials").split("|")]:
        p = poly_from_expr(text, cfg.integer("grid", "n", 2))
        sub = subtract_obstacle(PolyField(p), PolySpec.zero(p.n), 0)
        for r in radii:
            eh, ei = [], []
            for dr in drs:
                d = check_diff_formula(sub.u, sub.f, r, delta, dr, quad)
                eh.append(d.H_residual)
                ei.append(d.I_residual)
                rows.append([text, r, dr, d.H_fd, d.H_rhs, d.I_fd, d.I_rhs])
            for label, e in (("H", eh), ("I", ei)):
                order = float(np.polyfit(np.log(drs), np.log(np.maximum(e, 1e-300)), 1)[0])
                res.add(f"{label}' formula order, p={text}, r={r}", order >= min_order, order, min_order)
    res.files.append(_write_rows(out / "diff_formula.csv", ["poly", "r", "dr", "H_fd", "H_rhs", "I_fd", "I_rhs"], rows))
    return res


def random_test_function(rng: np.random.Generator, n: int):
    """Random smooth function with analytic gradient for Gaussian integrals."""
    a = rng.normal(size=n) * 0.5
    b = rng.normal(size=(n, n)) * 0.1
    b = 0.5 * (b + b.T)
    w = rng.normal(size=n)
    c0, c1, c2 = rng.normal(size=3)

    def f(x):
        return c0 + c1 * np.sin(x @ w) + c2 * np.exp(-0.1 * np.sum(x * x, axis=-1)) + x @ a + np.einsum("...i,ij,...j", x, b, x)

    def grad(x):
        return (c1 * np.cos(x @ w)[..., None] * w - 0.2 * c2 * np.exp(-0.1 * np.sum(x * x, axis=-1))[..., None] * x
                + a + 2 * x @ b)

    return f, grad


def task_log_sobolev(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    rng = np.random.default_rng(cfg.seed)
    count = cfg.integer("problem", "count", 100)
    tol = cfg.number("tolerances", "gap", 1e-8)
    rows = []
    worst = math.inf
    for i in range(count):
        n = int(rng.integers(1, 3))
        s = -float(rng.uniform(0.25, 2.0))
        f, g = random_test_function(rng, n)
        gap = log_sobolev_gap(f, g, n, s)
        rows.append([i, n, s, gap])
        worst = min(worst, gap)
    res.add(f"min gap over {count} random functions", worst >= -tol, worst, tol)
    const = log_sobolev_gap(lambda x: np.full(len(x), 2.0), lambda x: np.zeros_like(x), 2, -1.0)
    eq_tol = cfg.number("tolerances", "equality", 1e-3)
    res.add("gap of the constant function", abs(const) <= eq_tol, abs(const), eq_tol)
    res.files.append(_write_rows(out / "log_sobolev.csv", ["i", "n", "s", "gap"], rows))
    return res


def _exact_members(n: int) -> list[tuple[str, PolySpec, int]]:
    x1sq = PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,2 j=0 coeff=-1") if n == 2 else None
    out = [
        ("timelike_m1", timelike_polynomial(1, 1, n), 2),
        ("timelike_m2", timelike_polynomial(2, 1, n), 4),
        ("monneau_positive_m1", monneau_positive_polynomial(n, 1), 2),
        ("monneau_positive_m2", monneau_positive_polynomial(n, 2), 4),
    ]
    if x1sq is not None:
        out.append(("x1^2-x2^2", x1sq, 2))
    return out


def task_weiss(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    exact_tol = cfg.number("tolerances", "exact", 1e-6)
    r = log_r_grid(0.05, 0.5, 16)
    rows = []
    for name, p, kappa in _exact_members(n):
        ok, why = in_class_P(p, kappa)
        w = max(abs(weiss(PolyField(p), kappa, ri)) for ri in r)
        rows.append([name, kappa, w])
        res.add(f"|W| for P_kappa member {name}", ok and w <= exact_tol, w, exact_tol, why)
    hs = parse_solution("halfspace_32", n).field()
    w = max(abs(weiss(hs, 1.5, ri)) for ri in r)
    rows.append(["halfspace_32", 1.5, w])
    res.add("|W| for halfspace_32 at kappa=3/2", w <= exact_tol, w, exact_tol)
    res.files.append(_write_rows(out / "weiss_exact.csv", ["field", "kappa", "max_abs_W"], rows))

    mono_tol = cfg.number("tolerances", "monotone", 0.01)
    zero_tol = cfg.number("tolerances", "w0", 0.01)
    C = cfg.number("truncation", "C", 0.0)
    sigma = cfg.number("truncation", "sigma", 1.0)
    for spec in cfg.words("problem", "solutions", []):
        h = cfg.h
        prob, rep = solver_run(spec, h, n=n)
        fb = extract_free_boundary(rep.field, prob)
        centers = classification_centers(fb, cfg.number("classify", "center_radius", 0.25))
        regular = 0
        for c in centers:
            center = np.concatenate([c, [0.0]])
            sub, trunc, cut = centered_field(rep.field, center, cfg)
            est = estimate_kappa(sub.u, trunc, h, cutoff=cut)
            if classify_kappa(est.kappa_hat, None)[0] != "regular":
                continue
            regular += 1
            rr = log_r_grid(4 * h, 0.5, cfg.integer("radii", "per_decade", 16))
            W = np.array([weiss(sub.u, 1.5, ri) for ri in rr])
            _write_rows(out / f"weiss_{spec}_x{c[0]:+.4f}.csv", ["r", "W"], zip(rr, W))
            mod = W + C * rr ** (2 * sigma)
            drop = float(np.max(np.maximum(mod[:-1] - mod[1:], 0.0)))
            res.add(f"{spec} x0={c.tolist()}: W + C r^2sigma near-monotone", drop <= mono_tol, drop, mono_tol)
            lo, hi = reliable_window(h, cutoff=cut)
            rw = log_r_grid(lo, hi, 64)
            Ww = np.array([weiss(sub.u, 1.5, ri) for ri in rw])
            w0 = float(np.polyfit(rw, Ww, 1)[1])
            res.add(f"{spec} x0={c.tolist()}: W(0+)", abs(w0) <= zero_tol, w0, zero_tol)
        res.add(f"{spec}: regular points examined", regular > 0, regular, 1)
    return res


def task_monneau(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    h = cfg.h
    r = log_r_grid(0.05, 0.5, 16)
    tay = parse_solution("taylor_cntrex", n).field()
    p1 = timelike_polynomial(1, 1, n)
    M = np.array([monneau(tay, p1, 2, ri) for ri in r])
    res.add("Monneau(taylor_cntrex, timelike m=1) == 0", np.all(M == 0.0), float(np.max(np.abs(M))), 0.0)

    mono_tol = cfg.number("tolerances", "monotone", 0.01)
    coef_tol = cfg.number("tolerances", "coefficients", 0.02)
    _, rep = solver_run("taylor_cntrex", h, n=n)
    sub, trunc, cut = centered_field(rep.field, np.zeros(n), cfg)
    fit = fit_singular_polynomial(sub.u, 2, 4 * h)
    exact = {k: float(c) for k, c in p1.terms.items()}
    scale = max(abs(c) for c in exact.values())
    err = max(abs(fit.coefficients.get(k, 0.0) - exact.get(k, 0.0)) for k in set(exact) | set(fit.coefficients)) / scale
    res.add("fitted p_2 coefficients vs -t - x_n^2/2", err <= coef_tol, err, coef_tol, repr(fit.p))
    rows = []
    rr = log_r_grid(4 * h, 0.5, cfg.integer("radii", "per_decade", 16))
    for label, p in (("exact", p1), ("fit", fit.p)):
        Mv = np.array([monneau(sub.u, p, 2, ri, check=False) for ri in rr])
        rows.extend([label, a, b] for a, b in zip(rr, Mv))
        drop = float(np.max(np.maximum(Mv[:-1] - Mv[1:], 0.0)))
        res.add(f"Monneau near-monotone on solver taylor_cntrex, p={label}", drop <= mono_tol, drop, mono_tol)
    res.files.append(_write_rows(out / "monneau_solver.csv", ["p", "r", "M"], rows))
    return res


def _classification_rows(points: list[PointClassification], dims: dict) -> list:
    rows = []
    for pc in points:
        d = dims.get(pc.center, "")
        dens = list(pc.density) + [""] * (3 - len(pc.density))
        rows.append([*pc.center, pc.t0, pc.kappa_hat, pc.label, d, *dens[:3]])
    return rows


def classify_solution(spec: str, h: float, cfg: ExperimentConfig):
    """Classify every extended free boundary node of a solver reproduction at t = 0."""
    n = cfg.integer("grid", "n", 2)
    prob, rep = solver_run(spec, h, n=n)
    v = rep.field
    fb = extract_free_boundary(v, prob)
    th = Thresholds(band=cfg.number("tolerances", "band", 0.15))
    out = []
    for c in classification_centers(fb, cfg.number("classify", "center_radius", 0.25)):
        center = np.concatenate([c, [0.0]])
        sub, trunc, cut = centered_field(v, center, cfg)
        pc = classify_point(sub.u, trunc, h, fb, cutoff=cut, thresholds=th)
        pc.center = tuple(float(x) for x in center)
        pc.density = [contact_density(fb, c, 0.0, r) for r in density_radii(h)]
        pc.cls, pc.m = classify_kappa(pc.kappa_hat, pc.density, th)
        out.append((pc, sub, trunc, cut))
    return fb, v, out


def task_classify_suite(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    h = cfg.h
    lo_f, hi_f = (cfg.numbers("tolerances", "forbidden") or [1.65, 1.85])
    expect = dict(item.split("=") for item in cfg.words("classify", "expect_origin", []))
    all_k = []
    for spec in cfg.words("problem", "solutions", []):
        _, _, pts = classify_solution(spec, h, cfg)
        dims = {}
        for pc, sub, _, _ in pts:
            all_k.append((spec, pc.center, pc.kappa_hat))
            if pc.cls == "singular" and pc.m:
                fit = fit_singular_polynomial(sub.u, 2 * pc.m, 4 * h)
                try:
                    dims[pc.center] = singular_spatial_dimension(fit.p, rtol=0.02)
                except (AssertionError, ValueError) as exc:
                    dims[pc.center] = f"error: {exc}"
        res.files.append(_write_rows(
            out / f"classification_{spec}.csv",
            [f"x0_{i + 1}" for i in range(n)] + ["t0", "kappa_hat", "class", "d", "density_r1", "density_r2", "density_r3"],
            _classification_rows([p[0] for p in pts], dims)))
        res.add(f"{spec}: extended free boundary nonempty", len(pts) > 0, len(pts), 1)
        at0 = [p[0] for p in pts if np.allclose(p[0].center, 0.0)]
        if spec in expect:
            label = at0[0].label if at0 else "missing"
            res.add(f"{spec}: origin classified {expect[spec]}", label == expect[spec], at0[0].kappa_hat if at0 else math.nan, 0.0, label)
            res.add(f"{spec}: no point classified regular" if expect[spec] != "regular" else f"{spec}: all points regular",
                    all((p[0].cls == "regular") == (expect[spec] == "regular") for p in pts), len(pts), 0)
    quad_h = h
    for spec in cfg.words("problem", "catalog", []):
        sol = parse_solution(spec, n)
        est = estimate_kappa(sol.field(), TruncationSpec(M=0.0), quad_h)
        all_k.append((spec, (0.0,) * n, est.kappa_hat))
        label = classify_kappa(est.kappa_hat, None)
        if spec in expect:
            res.add(f"{spec} (closed form): origin classified {expect[spec]}", f"{label[0]}" == expect[spec] or
                    (label[0] == "singular" and f"singular({label[1]})" == expect[spec]), est.kappa_hat, 0.0, str(label))
    inside = [(s, c, k) for s, c, k in all_k if lo_f < k < hi_f]
    res.add(f"no kappa_hat in ({lo_f}, {hi_f})", not inside, len(inside), 0,
            "; ".join(f"{s}@{c}: {k:.3f}" for s, c, k in inside))
    res.files.append(_write_rows(out / "kappa_hat_all.csv", ["source", "center", "kappa_hat"],
                                 ([s, " ".join(f"{x:.6g}" for x in c), k] for s, c, k in all_k)))
    return res


def task_growth(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    h = cfg.h
    slope_min = cfg.number("tolerances", "slope", 2.9)
    var_tol = cfg.number("tolerances", "growth_variation", 0.25)
    hold_tol = cfg.number("tolerances", "holder_change", 0.15)
    radii = cfg.numbers("radii", "dyadic", [0.25, 0.125, 0.0625, 0.03125])
    rows = []
    for spec in cfg.words("problem", "solutions", []):
        prob, rep = solver_run(spec, h, n=n)
        fb = extract_free_boundary(rep.field, prob)
        worst_slope, worst_var = math.inf, 0.0
        for c in classification_centers(fb, cfg.number("classify", "center_radius", 0.25)):
            center = np.concatenate([c, [0.0]])
            sub, _, cut = centered_field(rep.field, center, cfg)
            lo, hi = reliable_window(h, cutoff=cut)
            s = H_slope(sub.u, lo, hi)
            ratios = pointwise_growth(rep.field, center, 0.0, radii)
            var = growth_constant_variation(ratios)
            rows.append([spec, *center, s, *ratios, var])
            worst_slope = min(worst_slope, s)
            worst_var = max(worst_var, var)
        res.add(f"{spec}: min log-log slope of H over Gamma_*", worst_slope >= slope_min, worst_slope, slope_min)
        res.add(f"{spec}: variation of the growth constant", worst_var <= var_tol, worst_var, var_tol)
        sem = []
        for hh in cfg.h_list:
            _, r2 = solver_run(spec, hh, n=n)
            sem.append(parabolic_holder_seminorm(r2.field, 1.5, SubCylinder((0.0,) * n, 0.0, 0.25), seed=cfg.seed).value)
        if len(sem) > 1:
            ch = abs(sem[-1] - sem[-2]) / max(sem[-1], 1e-300)
            res.add(f"{spec}: 3/2-Hoelder seminorm stable under refinement", ch <= hold_tol, ch, hold_tol,
                    ", ".join(f"{s:.4g}" for s in sem))
    res.files.append(_write_rows(out / "growth.csv", ["source"] + [f"x{i + 1}" for i in range(n)] + ["t", "H_slope"]
                                 + [f"sup_ratio_r{r:g}" for r in radii] + ["variation"], rows))
    return res


def task_spatial_dimension(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    cases = [
        ("n=2 -t - x_n^2/2", PolySpec.from_text("alpha=0,0 j=1 coeff=-1\nalpha=0,2 j=0 coeff=-1/2"), 1),
        ("n=2 x1^2 - x_n^2", PolySpec.from_text("alpha=2,0 j=0 coeff=1\nalpha=0,2 j=0 coeff=-1"), 0),
        ("n=3 x1^2 - x_n^2", PolySpec.from_text("alpha=2,0,0 j=0 coeff=1\nalpha=0,0,2 j=0 coeff=-1"), 1),
    ]
    rows = []
    for name, p, want in cases:
        d = singular_spatial_dimension(p.with_kappa())
        rows.append([name, d, want])
        res.add(f"d({name})", d == want, d, want)
    rng = np.random.default_rng(cfg.seed)
    bad = 0
    trials = cfg.integer("problem", "trials", 20)
    for _ in range(trials):
        n = int(rng.integers(2, 4))
        m = int(rng.integers(1, 4))
        C = Fraction(int(rng.integers(1, 50)), int(rng.integers(1, 50)))
        p = timelike_polynomial(m, C, n)
        try:
            d = singular_spatial_dimension(p)
        except AssertionError:
            bad += 1
            continue
        bad += d != n - 1
    res.add("d = n-1 members match the time-like form", bad == 0, bad, 0)
    res.files.append(_write_rows(out / "spatial_dimension.csv", ["case", "d", "expected"], rows))
    return res


def task_solve_single(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    method = cfg.get("solver", "method", "projected")
    eps = cfg.number("solver", "eps", None)
    for spec in cfg.words("problem", "solutions"):
        prob, rep = solver_run(spec, cfg.h, method, eps, n)
        err = sup_error(rep.field, parse_solution(spec, n).field())
        tol = cfg.number("tolerances", "sup_error", 1e-2)
        res.add(f"{spec}: sup error vs closed form", err <= tol, err, tol)
        res.files.append(write_final_level(rep.field, out / f"solution_{spec}.csv"))
        res.data[spec] = {"iterations": int(np.sum(rep.iterations)), "penetration": rep.penetration,
                          "residuals": rep.residuals.as_dict()}
    return res


def task_cross_validation(cfg: ExperimentConfig, out: Path) -> Outcome:
    """Projected vs penalized solves on a catalog reproduction."""
    res = Outcome()
    n = cfg.integer("grid", "n", 2)
    spec = cfg.words("problem", "solutions")[0]
    exact = parse_solution(spec, n).field()
    eps_list = cfg.numbers("solver", "eps")
    h = cfg.h
    _, proj = solver_run(spec, h, "projected", None, n)
    rows, diffs, pens = [], [], []
    for eps in eps_list:
        _, pen = solver_run(spec, h, "penalized", eps, n)
        d = sup_difference(proj.field, pen.field)
        diffs.append(d)
        pens.append(pen.penetration)
        rows.append([h, eps, d, pen.penetration, sup_error(pen.field, exact)])
    order = float(np.polyfit(np.log(eps_list), np.log(diffs), 1)[0])
    otol = cfg.number("tolerances", "order_band", 0.3)
    res.add("order of |projected - penalized| in eps", abs(order - 1) <= otol, order, otol,
            ", ".join(f"{d:.3g}" for d in diffs))
    ratio = max(d / e for d, e in zip(diffs, eps_list))
    ctol = cfg.number("tolerances", "C_eps", 2.0)
    res.add("|projected - penalized| <= C eps", ratio <= ctol, ratio, ctol)
    Cs = np.array(pens) / np.array(eps_list)
    spread = float(Cs.max() / max(Cs.min(), 1e-300))
    stol = cfg.number("tolerances", "penetration_spread", 2.0)
    res.add("penetration / eps stable (max/min ratio)", spread <= stol, spread, stol,
            ", ".join(f"{c:.3g}" for c in Cs))
    # refinement: projected in h, penalized with eps tied to h
    pairs = list(zip(cfg.h_list, cfg.numbers("solver", "eps_refine", [])))
    perr, qerr = [], []
    for hh in cfg.h_list:
        _, p = solver_run(spec, hh, "projected", None, n)
        perr.append(sup_error(p.field, exact))
    for hh, ee in pairs:
        _, q = solver_run(spec, hh, "penalized", ee, n)
        qerr.append(sup_error(q.field, exact))
    dec = lambda e: all(b < a for a, b in zip(e, e[1:]))  # noqa: E731
    res.add("projected sup error decreases under refinement", dec(perr), perr[-1], perr[0], ", ".join(f"{e:.3g}" for e in perr))
    if qerr:
        res.add("penalized sup error decreases under refinement of (h, eps)", dec(qerr), qerr[-1], qerr[0],
                ", ".join(f"{e:.3g}" for e in qerr))
        c_he = max(e / (hh + ee) for e, (hh, ee) in zip(qerr, pairs))
        htol = cfg.number("tolerances", "C_h_eps", 2.0)
        res.add("penalized sup error <= C (h + eps)", c_he <= htol, c_he, htol)
    res.files.append(_write_rows(out / "cross_validation.csv", ["h", "eps", "sup_proj_minus_pen", "penetration", "sup_error_pen"], rows))
    return res


def task_whitney(cfg: ExperimentConfig, out: Path) -> Outcome:
    res = Outcome()
    n = cfg.integer("whitney", "n", 1)
    m = cfg.integer("whitney", "m", 1)
    eps = cfg.number("whitney", "eps", 0.25)
    max_level = cfg.integer("whitney", "max_level", 8)
    box = ([-1.0] * (n + 1), [1.0] * (n + 1))
    dec = whitney_decompose(np.zeros((1, n + 1)), box, max_level=max_level)
    res.files.append(dec.to_csv(out / "cubes_origin.csv"))
    res.add("cube volume identity", dec.volume_defect() == 0, float(dec.volume_defect()), 0.0)
    rat = dec.ratios
    inside = np.mean((rat >= dec.c_n - 1e-12) & (rat <= dec.C_n + 1e-12))
    res.add("distance comparison holds for all cubes", inside == 1.0, float(inside), 1.0,
            f"ratios in [{rat.min():.3f}, {rat.max():.3f}], c_n={dec.c_n:.3f}, C_n={dec.C_n:.3f}")
    disjoint = _cubes_disjoint(dec.cubes + dec.unresolved)
    res.add("cube interiors pairwise disjoint", disjoint, 0.0 if disjoint else 1.0, 0.0)

    rng = np.random.default_rng(cfg.seed)
    E = np.array([[0.0] * (n + 1)] + [list(rng.uniform(-0.5, 0.5, n)) + [float(rng.uniform(-0.25, 0.25))] for _ in range(3)])
    q = _random_poly(rng, n, m)
    jets = JetFamily.from_polynomial(q, E, m)
    jets.to_csv(out / "jets_poly.csv")
    ext = whitney_extend(jets, eps, box=box, max_level=max_level)
    P = _sample_off(rng, E, n, 300, ext)
    pu = partition_of_unity(ext.dec, eps)
    s = float(np.max(np.abs(pu.weights(P).sum(axis=1) - 1)))
    res.add("partition of unity sums to 1", s <= 1e-12, s, 1e-12)
    rep = float(np.max(np.abs(ext(P) - q.evaluate(P[:, :-1], P[:, -1]))))
    res.add("polynomial reproduction", rep <= 1e-10, rep, 1e-10)

    def smooth(alpha, j, x, t):
        # d^alpha d_t^j of sin(x_1) e^t prod_{i>1} cos(x_i)
        v = np.exp(t)
        for i, a in enumerate(alpha):
            fn = (np.sin, np.cos, lambda z: -np.sin(z), lambda z: -np.cos(z))
            base = 0 if i == 0 else 1
            v = v * fn[(base + a) % 4](x[:, i])
        return v

    jets2 = JetFamily.from_callable(smooth, E, m)
    comp = check_compatibility(jets2)
    res.add("smooth jets compatible", comp.ok, len(comp.flagged), 0)
    ext2 = whitney_extend(jets2, eps, box=box, max_level=max_level)
    err = jet_reproduction_error(ext2, E)
    res.add("jets reproduced on E", err <= 1e-8, err, 1e-8)
    orders = jet_approach_orders(ext2, E)
    omin = min(orders.values())
    otol = cfg.number("tolerances", "approach_order", 0.9)
    res.add("derivatives of F converge to the jets approaching E", omin >= otol, omin, otol,
            ", ".join(f"{k}: {v:.2f}" for k, v in sorted(orders.items())))
    return res


def _cubes_disjoint(cubes) -> bool:
    """Dyadic cubes overlap iff one contains the other: no ancestor of a cube may be present."""
    seen = {}
    for q in cubes:
        seen.setdefault(q.k, set()).add(q.anchor)
    levels = sorted(seen)
    for q in cubes:
        for k in levels:
            if k >= q.k:
                break
            shift = q.k - k
            anc = tuple(a >> shift for a in q.anchor[:-1]) + (q.anchor[-1] >> (2 * shift),)
            if anc in seen[k]:
                return False
    return len({(q.k, q.anchor) for q in cubes}) == len(cubes)


def _random_poly(rng, n: int, m: int) -> PolySpec:
    terms = {}
    for alpha, j in jet_indices(n, m):
        terms[(alpha, j)] = Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5)))
    return PolySpec(n, terms)


def _sample_off(rng, E, n, count, ext, margin: float = 0.05):
    P = np.concatenate([rng.uniform(-0.9, 0.9, (count * 3, n)), rng.uniform(-0.9, 0.9, (count * 3, 1))], axis=1)
    D = P[:, None, :] - E[None, :, :]
    d = np.sqrt(np.sum(D[..., :-1] ** 2, axis=-1) + np.abs(D[..., -1])).min(axis=1)
    P = P[d > margin]
    cov = ext.pu.overlap(P) > 0
    return P[cov][:count]


def jet_reproduction_error(ext, E) -> float:
    """``max |d^gamma F(y) - f_gamma(y)|`` over ``y`` in ``E`` and the jet index set."""
    jets = ext.jets
    worst = 0.0
    for alpha, j in jet_indices(jets.n, jets.m):
        vals = ext.derivative(tuple(alpha) + (j,), E)
        worst = max(worst, float(np.max(np.abs(vals - np.asarray(jets.values[(alpha, j)], dtype=float)))))
    return worst


def jet_approach_orders(ext, E, steps: int = 8) -> dict:
    """Observed decay order of ``|d^gamma F(P) - f_gamma(y)|`` as ``P -> y``.

    ``P = y + d e_1 - (d^2/2) e_t`` with dyadic ``d``, kept only where the
    resolved cubes cover ``P``. Returns the minimum order per ``gamma``;
    ``inf`` when the error stays below 1e-10.
    """
    jets = ext.jets
    n = jets.n
    Dmin = min((math.sqrt(float(np.sum((a[:-1] - b[:-1]) ** 2) + abs(a[-1] - b[-1])))
                for i, a in enumerate(E) for b in E[i + 1:]), default=1.0)
    ds = Dmin / 4 * 2.0 ** -np.arange(steps)
    orders = {}
    for y in E:
        e = np.zeros(n + 1)
        e[0] = 1.0
        P = np.array([y + d * e - np.array([0.0] * n + [d * d / 2]) for d in ds])
        ok = ext.pu.overlap(P) > 0
        ok[ok] = np.abs(ext.pu.weights(P[ok]).sum(axis=1) - 1) <= 1e-12
        if ok.sum() < 3:
            raise ValueError("too few covered approach points; raise max_level")
        for alpha, j in jet_indices(n, jets.m):
            i = int(np.flatnonzero(np.all(jets.points == y, axis=1))[0])
            err = np.abs(ext.derivative(tuple(alpha) + (j,), P[ok]) - float(jets.values[(alpha, j)][i]))
            live = err > 1e-10
            if live.sum() < 2:
                order = math.inf
            else:
                order = float(np.polyfit(np.log(ds[ok][live]), np.log(err[live]), 1)[0])
            key = tuple(alpha) + (j,)
            orders[key] = min(orders.get(key, math.inf), order)
    return orders


_DISPATCH = {
    ("catalog_check", "catalog"): task_catalog,
    ("frequency", "profile"): task_profile,
    ("frequency", "monotonicity"): task_monotonicity,
    ("frequency", "diff_formula"): task_diff_formula,
    ("frequency", "log_sobolev"): task_log_sobolev,
    ("weiss_monneau", "weiss"): task_weiss,
    ("weiss_monneau", "monneau"): task_monneau,
    ("classify", "suite"): task_classify_suite,
    ("classify", "growth"): task_growth,
    ("classify", "spatial_dimension"): task_spatial_dimension,
    ("solve", "single"): task_solve_single,
    ("solve", "cross_validation"): task_cross_validation,
    ("whitney", "extension"): task_whitney,
}


# --------------------------------------------------------------------------
# runner
# --------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, out, threads: int = 1) -> tuple[Path, Outcome]:
    """Run one config into ``out``; returns the directory and the outcome.

    The directory holds ``config.ini`` (resolved), the task CSVs,
    ``summary.json`` (checks) and ``manifest.json`` (versions, timings,
    file hashes). Only the ``timings`` entry differs between reruns.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _set_threads(threads)
    (out / "config.ini").write_text(cfg.to_ini())
    t0 = time.perf_counter()
    outcome = _DISPATCH[(cfg.kind, cfg.task)](cfg, out)
    elapsed = time.perf_counter() - t0
    summary = {
        "name": cfg.name,
        "kind": cfg.kind,
        "task": cfg.task,
        "passed": outcome.passed,
        "checks": [c.as_dict() for c in outcome.checks],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    import numba
    import scipy
    import sympy

    manifest = {
        "parasig": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
        "numba": numba.__version__,
        "threads": threads,
        "files": {p.name: _sha256(p) for p in files},
        "timings": {"elapsed_s": elapsed},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out, outcome


def _set_threads(threads: int):
    import numba

    numba.config.THREADING_LAYER = "workqueue"
    numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
