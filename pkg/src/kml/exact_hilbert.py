"""Exact Hilbert matrices, their inverses and rational solves.

Entries are :class:`fractions.Fraction`, which is already normalized
(gcd-reduced, positive denominator) after every operation.  Indices are
0-based in code; entry ``(i, j)`` of ``H_m`` is ``1/(i+j+1)``.
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Sequence

from .errors import ShapeError, SizeError

Rational = Fraction
MAX_ORDER = 64


class RationalMatrix:
    """Immutable square matrix of exact rationals."""

    __slots__ = ("_rows",)

    def __init__(self, rows):
        rows = tuple(tuple(Fraction(v) for v in r) for r in rows)
        if not rows or any(len(r) != len(rows) for r in rows):
            raise ShapeError("RationalMatrix must be square and non-empty")
        self._rows = rows

    @property
    def order(self) -> int:
        return len(self._rows)

    def __getitem__(self, ij):
        i, j = ij
        m = self.order
        if not (0 <= i < m and 0 <= j < m):
            raise IndexError(f"entry ({i}, {j}) outside {m}x{m} matrix")
        return self._rows[i][j]

    def rows(self):
        return self._rows

    def __eq__(self, other):
        if not isinstance(other, RationalMatrix):
            return NotImplemented
        return self._rows == other._rows

    def __hash__(self):
        return hash(self._rows)

    def __matmul__(self, other):
        if isinstance(other, RationalMatrix):
            if other.order != self.order:
                raise ShapeError("order mismatch")
            cols = list(zip(*other._rows))
            return RationalMatrix(
                [[sum((a * b for a, b in zip(r, c)), Fraction(0)) for c in cols] for r in self._rows]
            )
        vec = _as_vector(other, self.order)
        return tuple(sum((a * b for a, b in zip(r, vec)), Fraction(0)) for r in self._rows)

    def to_float(self):
        import numpy as np

        return np.array([[float(v) for v in r] for r in self._rows])

    def __repr__(self):
        return f"RationalMatrix(order={self.order})"


def identity(m: int) -> RationalMatrix:
    return RationalMatrix([[Fraction(int(i == j)) for j in range(m)] for i in range(m)])


def _check_order(m: int) -> None:
    if not isinstance(m, int) or not 1 <= m <= MAX_ORDER:
        raise SizeError(f"Hilbert order must be an integer in [1, {MAX_ORDER}], got {m!r}")


def _as_vector(v: Sequence, m: int) -> tuple:
    v = tuple(Fraction(x) for x in v)
    if len(v) != m:
        raise ShapeError(f"expected vector of length {m}, got {len(v)}")
    return v


@lru_cache(maxsize=None)
def hilbert_matrix(m: int) -> RationalMatrix:
    _check_order(m)
    return RationalMatrix([[Fraction(1, i + j + 1) for j in range(m)] for i in range(m)])


@lru_cache(maxsize=None)
def hilbert_inverse(m: int) -> RationalMatrix:
    """Exact inverse from the closed binomial formula (entries are integers).

    With 1-based i, j:
    (-1)^(i+j) (i+j-1) C(m+i-1, m-j) C(m+j-1, m-i) C(i+j-2, i-1)^2.
    """
    _check_order(m)
    rows = []
    for i in range(1, m + 1):
        row = []
        for j in range(1, m + 1):
            v = (i + j - 1) * comb(m + i - 1, m - j) * comb(m + j - 1, m - i) * comb(i + j - 2, i - 1) ** 2
            row.append(Fraction(-v if (i + j) % 2 else v))
        rows.append(row)
    return RationalMatrix(rows)


def solve_hilbert(m: int, rhs: Sequence) -> tuple:
    """Exact alpha with H_m alpha = rhs."""
    _check_order(m)
    return hilbert_inverse(m) @ _as_vector(rhs, m)


def quadratic_form_inverse(m: int, v: Sequence) -> Fraction:
    """Exact v^T H_m^{-1} v."""
    _check_order(m)
    v = _as_vector(v, m)
    hv = hilbert_inverse(m) @ v
    return sum((a * b for a, b in zip(v, hv)), Fraction(0))


def power_vector(x, m: int) -> tuple:
    """(1, x, ..., x^(m-1)) as exact rationals."""
    x = Fraction(x)
    out = [Fraction(1)]
    for _ in range(m - 1):
        out.append(out[-1] * x)
    return tuple(out)
