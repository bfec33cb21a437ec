"""Sparse multivariate polynomials with complex coefficients.

A :class:`MultiPoly` is an immutable map from exponent tuples to complex
coefficients.  It is used both for x-space coefficient functions (drift,
diffusion, observation) and for the xi-space multipliers that appear in the
generator symbols.
"""

from __future__ import annotations

import itertools
import re
from typing import Mapping, Sequence

import numpy as np

ZERO_TOL = 1e-15

Exponent = tuple[int, ...]


def _canonical(terms: Mapping[Exponent, complex]) -> dict[Exponent, complex]:
    return {e: complex(c) for e, c in terms.items() if abs(c) > ZERO_TOL}


class MultiPoly:
    """Polynomial in ``nvars`` variables, stored as ``{exponent: coefficient}``."""

    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars: int, terms: Mapping[Sequence[int], complex] | None = None):
        if nvars < 1:
            raise ValueError("nvars must be positive")
        clean: dict[Exponent, complex] = {}
        for e, c in (terms or {}).items():
            e = tuple(int(k) for k in e)
            if len(e) != nvars:
                raise ValueError(f"exponent {e} does not have length {nvars}")
            if any(k < 0 for k in e):
                raise ValueError(f"negative exponent in {e}")
            clean[e] = clean.get(e, 0j) + complex(c)
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "_terms", _canonical(clean))

    def __setattr__(self, name, value):
        raise AttributeError("MultiPoly is immutable")

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> MultiPoly:
        return cls(nvars)

    @classmethod
    def const(cls, nvars: int, c: complex) -> MultiPoly:
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def var(cls, nvars: int, index: int, power: int = 1) -> MultiPoly:
        e = [0] * nvars
        e[index] = power
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def from_coeffs(cls, coeffs: Sequence[complex]) -> MultiPoly:
        """Univariate polynomial from ascending coefficients ``c0 + c1 x + ...``."""
        return cls(1, {(k,): c for k, c in enumerate(coeffs)})

    # -- accessors --------------------------------------------------------

    @property
    def terms(self) -> dict[Exponent, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coeff(self, exponent: Sequence[int]) -> complex:
        return self._terms.get(tuple(exponent), 0j)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        return max((sum(e) for e in self._terms), default=0)

    def is_real(self, tol: float = 0.0) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def coeffs_1d(self) -> np.ndarray:
        """Ascending coefficient vector of a univariate polynomial."""
        if self.nvars != 1:
            raise ValueError("coeffs_1d needs a univariate polynomial")
        out = np.zeros(self.degree() + 1, dtype=complex)
        for (k,), c in self._terms.items():
            out[k] = c
        return out

    # -- arithmetic -------------------------------------------------------

    def _check(self, other: MultiPoly) -> None:
        if self.nvars != other.nvars:
            raise ValueError(f"dimension mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other) -> MultiPoly:
        if isinstance(other, MultiPoly):
            self._check(other)
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return MultiPoly.const(self.nvars, complex(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for e, c in other._terms.items():
            out[e] = out.get(e, 0j) + c
        return MultiPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Exponent, complex] = {}
        for (e1, c1), (e2, c2) in itertools.product(self._terms.items(), other._terms.items()):
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, 0j) + c1 * c2
        return MultiPoly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> MultiPoly:
        if k < 0:
            raise ValueError("negative power")
        out = MultiPoly.const(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self._terms.items())))

    def allclose(self, other: MultiPoly, tol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coeff(e) - other.coeff(e)) <= tol for e in keys)

    # -- calculus / evaluation --------------------------------------------

    def __call__(self, *point):
        if len(point) == 1 and isinstance(point[0], (list, tuple)):
            point = tuple(point[0])
        return poly_eval(self, point)

    def partial(self, var: int) -> MultiPoly:
        return poly_partial(self, var)

    def shift(self, offset: Sequence[float]) -> MultiPoly:
        """Return ``p(x + offset)``."""
        offset = list(offset)
        if len(offset) != self.nvars:
            raise ValueError("offset length does not match nvars")
        if not any(offset):
            return self
        lin = [MultiPoly.var(self.nvars, j) + offset[j] for j in range(self.nvars)]
        out = MultiPoly.zero(self.nvars)
        for e, c in self._terms.items():
            term = MultiPoly.const(self.nvars, c)
            for j, k in enumerate(e):
                if k:
                    term = term * lin[j] ** k
            out = out + term
        return out

    def __repr__(self):
        return f"MultiPoly({self.nvars}, {to_text(self)!r})"


def poly_add(p: MultiPoly, q: MultiPoly) -> MultiPoly:
    p._check(q)
    return p + q


def poly_mul(p: MultiPoly, q: MultiPoly) -> MultiPoly:
    p._check(q)
    return p * q


def poly_eval(p: MultiPoly, point: Sequence):
    """Evaluate at a point.  Entries of ``point`` may be numpy arrays (broadcast)."""
    if len(point) != p.nvars:
        raise ValueError(f"point has length {len(point)}, expected {p.nvars}")
    shape = np.broadcast_shapes(*(np.shape(x) for x in point))
    total = np.zeros(shape, dtype=complex) if shape else 0j
    for e, c in p.items():
        term = c
        for x, k in zip(point, e):
            if k:
                term = term * x**k
        total = total + term
    return total


def poly_partial(p: MultiPoly, var: int) -> MultiPoly:
    if not 0 <= var < p.nvars:
        raise ValueError(f"variable index {var} out of range")
    out = {}
    for e, c in p.items():
        k = e[var]
        if k:
            e2 = list(e)
            e2[var] = k - 1
            out[tuple(e2)] = c * k
    return MultiPoly(p.nvars, out)


def poly_matmul(a: Sequence[Sequence[MultiPoly]], b: Sequence[Sequence[MultiPoly]], nvars: int):
    """Matrix product of nested lists of polynomials."""
    rows, inner, cols = len(a), len(b), len(b[0]) if b else 0
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = MultiPoly.zero(nvars)
            for k in range(inner):
                acc = acc + a[i][k] * b[k][j]
            row.append(acc)
        out.append(row)
    return out


# -- text form ---------------------------------------------------------------

def _fmt_coeff(c: complex) -> str:
    if c.imag == 0:
        return repr(c.real)
    return repr(c)


def to_text(p: MultiPoly) -> str:
    """One term per line: ``c * x1^a1 x2^a2``; the zero polynomial is ``0``."""
    if p.is_zero():
        return "0"
    lines = []
    for e in sorted(p._terms, key=lambda e: (sum(e), tuple(-k for k in e))):
        c = p._terms[e]
        mono = " ".join(f"x{j + 1}^{k}" for j, k in enumerate(e) if k)
        lines.append(f"{_fmt_coeff(c)} * {mono}" if mono else _fmt_coeff(c))
    return "\n".join(lines)


_VAR = re.compile(r"^x(\d+)(?:\^(\d+))?$")


def from_text(text: str, nvars: int) -> MultiPoly:
    """Parse the text form written by :func:`to_text`.

    Terms may also be separated by ``;`` so a polynomial fits on one line of a
    config file.
    """
    terms: dict[Exponent, complex] = {}
    chunks = [s.strip() for s in re.split(r"[\n;]", text) if s.strip()]
    for lineno, chunk in enumerate(chunks, 1):
        coeff_s, _, mono_s = chunk.partition("*")
        try:
            c = complex(coeff_s.strip().replace(" ", ""))
        except ValueError as exc:
            raise ValueError(f"term {lineno}: bad coefficient {coeff_s.strip()!r}") from exc
        e = [0] * nvars
        for tok in mono_s.split():
            m = _VAR.match(tok)
            if not m:
                raise ValueError(f"term {lineno}: bad monomial token {tok!r}")
            j = int(m.group(1)) - 1
            if not 0 <= j < nvars:
                raise ValueError(f"term {lineno}: variable x{j + 1} outside 1..{nvars}")
            e[j] += int(m.group(2) or 1)
        terms[tuple(e)] = terms.get(tuple(e), 0j) + c
    return MultiPoly(nvars, terms)

