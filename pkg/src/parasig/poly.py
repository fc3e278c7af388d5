"""Exact multivariate polynomials in (x, t) with rational coefficients.

A :class:`PolySpec` stores terms ``c * x**alpha * t**j`` keyed by
``(alpha, j)``. All arithmetic is done with :class:`fractions.Fraction`;
floats appear only in :meth:`PolySpec.evaluate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping

import numpy as np

Key = tuple[tuple[int, ...], int]


def _frac(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, float):
        return Fraction(c)
    return Fraction(c)


@dataclass(frozen=True)
class PolySpec:
    """Polynomial in ``n`` spatial variables and time.

    ``kappa`` is an optional declared parabolic homogeneity; when set every
    term must satisfy ``|alpha| + 2 j == kappa``.
    """

    n: int
    terms: Mapping[Key, Fraction] = field(default_factory=dict)
    kappa: int | None = None

    def __post_init__(self):
        clean: dict[Key, Fraction] = {}
        for (alpha, j), c in dict(self.terms).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n:
                raise ValueError(f"multi-index {alpha} has wrong length for n={self.n}")
            if min(alpha, default=0) < 0 or j < 0:
                raise ValueError("negative exponent")
            c = _frac(c)
            if c != 0:
                key = (alpha, int(j))
                clean[key] = clean.get(key, Fraction(0)) + c
                if clean[key] == 0:
                    del clean[key]
        object.__setattr__(self, "terms", clean)
        if self.kappa is not None:
            for alpha, j in clean:
                if sum(alpha) + 2 * j != self.kappa:
                    raise ValueError(
                        f"term {alpha}, j={j} has parabolic degree "
                        f"{sum(alpha) + 2 * j} != declared kappa {self.kappa}"
                    )

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> PolySpec:
        return cls(n, {})

    @classmethod
    def constant(cls, n: int, c) -> PolySpec:
        return cls(n, {((0,) * n, 0): _frac(c)})

    @classmethod
    def monomial(cls, n: int, alpha: Iterable[int], j: int = 0, c=1) -> PolySpec:
        return cls(n, {(tuple(alpha), j): _frac(c)})

    @classmethod
    def x(cls, n: int, i: int) -> PolySpec:
        """The coordinate ``x_{i+1}`` (0-based ``i``)."""
        alpha = [0] * n
        alpha[i] = 1
        return cls.monomial(n, alpha)

    @classmethod
    def t(cls, n: int) -> PolySpec:
        return cls.monomial(n, (0,) * n, 1)

    # -- structure ----------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Parabolic degree ``max |alpha| + 2 j`` (-1 for the zero polynomial)."""
        return max((sum(a) + 2 * j for a, j in self.terms), default=-1)

    def homogeneity(self) -> int | None:
        """Common parabolic degree of all terms, or None if mixed/zero."""
        degs = {sum(a) + 2 * j for a, j in self.terms}
        return degs.pop() if len(degs) == 1 else None

    def with_kappa(self, kappa: int | None = None) -> PolySpec:
        k = self.homogeneity() if kappa is None else kappa
        return PolySpec(self.n, self.terms, k)

    def is_even_in_xn(self) -> bool:
        return all(a[-1] % 2 == 0 for a, _ in self.terms)

    def depends_on_xn(self) -> bool:
        return any(a[-1] for a, _ in self.terms)

    def coeff(self, alpha: Iterable[int], j: int = 0) -> Fraction:
        return self.terms.get((tuple(alpha), j), Fraction(0))

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: PolySpec):
        if other.n != self.n:
            raise ValueError("dimension mismatch")

    def __add__(self, other):
        if not isinstance(other, PolySpec):
            other = PolySpec.constant(self.n, other)
        self._check(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            terms[k] = terms.get(k, Fraction(0)) + c
        return PolySpec(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return PolySpec(self.n, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, PolySpec):
            other = PolySpec.constant(self.n, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, PolySpec):
            c = _frac(other)
            return PolySpec(self.n, {k: v * c for k, v in self.terms.items()})
        self._check(other)
        terms: dict[Key, Fraction] = {}
        for (a1, j1), c1 in self.terms.items():
            for (a2, j2), c2 in other.terms.items():
                key = (tuple(p + q for p, q in zip(a1, a2)), j1 + j2)
                terms[key] = terms.get(key, Fraction(0)) + c1 * c2
        return PolySpec(self.n, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = PolySpec.constant(self.n, 1)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, PolySpec):
            return NotImplemented
        return self.n == other.n and dict(self.terms) == dict(other.terms)

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    # -- calculus -----------------------------------------------------
    def diff(self, var: int | str, order: int = 1) -> PolySpec:
        """Derivative in ``x_{var+1}`` (int, 0-based) or in ``"t"``."""
        p = self
        for _ in range(order):
            terms: dict[Key, Fraction] = {}
            for (alpha, j), c in p.terms.items():
                if var == "t":
                    if j:
                        key = (alpha, j - 1)
                        terms[key] = terms.get(key, Fraction(0)) + c * j
                else:
                    a = alpha[var]
                    if a:
                        beta = list(alpha)
                        beta[var] -= 1
                        key = (tuple(beta), j)
                        terms[key] = terms.get(key, Fraction(0)) + c * a
            p = PolySpec(self.n, terms)
        return p

    def diff_multi(self, alpha: Iterable[int], j: int = 0) -> PolySpec:
        p = self
        for i, a in enumerate(alpha):
            if a:
                p = p.diff(i, a)
        return p.diff("t", j) if j else p

    def laplacian(self, thin: bool = False) -> PolySpec:
        """Full Laplacian, or the tangential one over x' when ``thin``."""
        m = self.n - 1 if thin else self.n
        out = PolySpec.zero(self.n)
        for i in range(m):
            out = out + self.diff(i, 2)
        return out

    def heat(self) -> PolySpec:
        """``(Delta - d/dt) p``; zero exactly iff ``p`` is caloric."""
        return self.laplacian() - self.diff("t")

    def is_caloric(self) -> bool:
        return self.heat().is_zero()

    def restrict_thin(self) -> PolySpec:
        """Trace on ``{x_n = 0}`` (kept as a polynomial in n variables)."""
        return PolySpec(self.n, {k: c for k, c in self.terms.items() if k[0][-1] == 0})

    def substitute_shift(self, x0: Iterable, t0=0) -> PolySpec:
        """Return ``q(x, t) = p(x - x0, t - t0)`` expanded exactly."""
        x0 = [_frac(v) for v in x0]
        lin = [PolySpec.x(self.n, i) - x0[i] for i in range(self.n)]
        lt = PolySpec.t(self.n) - _frac(t0)
        out = PolySpec.zero(self.n)
        for (alpha, j), c in self.terms.items():
            term = PolySpec.constant(self.n, c)
            for i, a in enumerate(alpha):
                if a:
                    term = term * lin[i] ** a
            if j:
                term = term * lt ** j
            out = out + term
        return out

    # -- evaluation ---------------------------------------------------
    def evaluate_exact(self, x: Iterable, t=0) -> Fraction:
        x = [_frac(v) for v in x]
        t = _frac(t)
        total = Fraction(0)
        for (alpha, j), c in self.terms.items():
            v = c * t ** j
            for xi, a in zip(x, alpha):
                v *= xi ** a
            total += v
        return total

    def evaluate(self, x, t) -> np.ndarray:
        """Float evaluation; ``x`` has shape ``(..., n)``, ``t`` broadcasts to ``(...)``."""
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], t.shape)
        out = np.zeros(shape)
        for (alpha, j), c in sorted(self.terms.items()):
            v = np.full(shape, float(c))
            for i, a in enumerate(alpha):
                for _ in range(a):  # repeated products keep sign symmetry bit-exact
                    v = v * x[..., i]
            for _ in range(j):
                v = v * t
            out = out + v
        return out

    # -- serialization ------------------------------------------------
    def to_text(self) -> str:
        """One term per line: ``alpha=<ints> j=<int> coeff=<p>/<q>``."""
        lines = []
        for (alpha, j), c in sorted(self.terms.items()):
            a = ",".join(str(v) for v in alpha)
            lines.append(f"alpha={a} j={j} coeff={c.numerator}/{c.denominator}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, n: int | None = None, kappa: int | None = None) -> PolySpec:
        terms: dict[Key, Fraction] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                parts = dict(item.split("=", 1) for item in line.split())
                alpha = tuple(int(v) for v in parts["alpha"].split(","))
                j = int(parts["j"])
                coeff = Fraction(parts["coeff"])
            except (KeyError, ValueError) as exc:
                raise ValueError(f"line {lineno}: malformed term {line!r}") from exc
            if n is None:
                n = len(alpha)
            key = (alpha, j)
            terms[key] = terms.get(key, Fraction(0)) + coeff
        if n is None:
            raise ValueError("empty polynomial text needs an explicit n")
        return cls(n, terms, kappa)

    def __repr__(self):
        if not self.terms:
            return f"PolySpec(n={self.n}, 0)"
        parts = []
        for (alpha, j), c in sorted(self.terms.items()):
            mono = "*".join(
                [f"x{i + 1}^{a}" if a > 1 else f"x{i + 1}" for i, a in enumerate(alpha) if a]
                + ([f"t^{j}" if j > 1 else "t"] if j else [])
            )
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return f"PolySpec(n={self.n}, " + " + ".join(parts) + ")"


def homogeneous_basis(n: int, kappa: int, even_in_xn: bool = True) -> list[Key]:
    """All monomials ``x^alpha t^j`` with ``|alpha| + 2 j = kappa``."""
    keys = []
    for j in range(kappa // 2 + 1):
        rest = kappa - 2 * j
        for alpha in product(range(rest + 1), repeat=n):
            if sum(alpha) != rest:
                continue
            if even_in_xn and alpha[-1] % 2:
                continue
            keys.append((tuple(alpha), j))
    return sorted(keys)


def multi_factorial(alpha: Iterable[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)
