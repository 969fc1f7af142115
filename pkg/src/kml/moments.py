"""Minimal moment functions on [0, 1] and their product extension.

``w_m^x`` is the least L2-norm function whose first ``m`` power moments
match those of the point mass at ``x``.  Exact coefficients come from the
Hilbert inverse; runtime evaluation uses the equivalent orthonormal
Legendre expansion ``sum_j (2j+1) P_j(2x-1) P_j(2z-1)``, because monomial
coefficients reach ~1e20 already at m = 15 and Horner evaluation loses
every significant digit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import comb
from typing import Sequence

import numpy as np

from . import exact_hilbert as eh
from .density import UniformDensity
from .errors import ConstraintError, DensityError, DomainError


def _as_anchor(x) -> Fraction:
    try:
        fx = Fraction(x)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"anchor {x!r} is not a real number") from exc
    if not 0 <= fx <= 1:
        raise DomainError(f"anchor must lie in [0, 1], got {x}")
    return fx


def legendre_table(t, m: int) -> np.ndarray:
    """Rows P_0(t), ..., P_{m-1}(t) for an array ``t`` in [-1, 1]."""
    t = np.asarray(t, dtype=float)
    out = np.empty((m,) + t.shape)
    out[0] = 1.0
    if m > 1:
        out[1] = t
    for j in range(1, m - 1):
        out[j + 1] = ((2 * j + 1) * t * out[j] - j * out[j - 1]) / (j + 1)
    return out


@dataclass(frozen=True)
class MomentPolynomial:
    m: int
    anchor: Fraction

    @cached_property
    def coefficients(self) -> tuple:
        """Exact alpha with H_m alpha = (1, x, ..., x^{m-1})."""
        return eh.solve_hilbert(self.m, eh.power_vector(self.anchor, self.m))

    @cached_property
    def float_coefficients(self) -> np.ndarray:
        return np.array([float(a) for a in self.coefficients])

    @cached_property
    def _legendre_weights(self) -> np.ndarray:
        j = np.arange(self.m)
        return (2 * j + 1) * legendre_table(2.0 * float(self.anchor) - 1.0, self.m)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.tensordot(self._legendre_weights, legendre_table(2.0 * z - 1.0, self.m), axes=1)

    def horner(self, z):
        """Monomial evaluation on the float mirrors; only trustworthy for m <~ 12."""
        z = np.asarray(z, dtype=float)
        acc = np.zeros_like(z)
        for a in self.float_coefficients[::-1]:
            acc = acc * z + a
        return acc

    def exact_value(self, z) -> Fraction:
        z = Fraction(z)
        acc = Fraction(0)
        for a in reversed(self.coefficients):
            acc = acc * z + a
        return acc


def build_moment_polynomial(m: int, x) -> MomentPolynomial:
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise DomainError(f"moment order must be a positive integer, got {m!r}")
    return MomentPolynomial(int(m), _as_anchor(x))


def _monomial_moment(alpha: Sequence[Fraction], ell: int) -> Fraction:
    # int_0^1 z^ell sum_i alpha_i z^(i-1) dz with 1-based i
    return sum((a / (ell + i + 1) for i, a in enumerate(alpha)), Fraction(0))


def moment_integral(w: MomentPolynomial, ell: int) -> Fraction:
    if ell < 0:
        raise DomainError("moment index must be nonnegative")
    return _monomial_moment(w.coefficients, ell)


def squared_norm(w: MomentPolynomial) -> Fraction:
    """Exact int_0^1 w^2 = xbar^T H_m^{-1} xbar."""
    return eh.quadratic_form_inverse(w.m, eh.power_vector(w.anchor, w.m))


@dataclass(frozen=True)
class AuxiliaryMomentFunction:
    """Rescaled copies of w_m^1 on [0, x] and, reflected, on (x, 1]."""

    m: int
    anchor: Fraction

    @cached_property
    def base(self) -> MomentPolynomial:
        return build_moment_polynomial(self.m, 1)

    def moment_integral(self, h: int) -> Fraction:
        x = self.anchor
        alpha = self.base.coefficients
        base_moments = [_monomial_moment(alpha, p) for p in range(h + 1)]
        left = x ** (h + 1) * base_moments[h]
        # int_x^1 z^h w1((1-z)/(1-x)) dz = (1-x) int_0^1 (1 - (1-x) y)^h w1(y) dy
        r = 1 - x
        right = r * sum((comb(h, p) * (-r) ** p * base_moments[p] for p in range(h + 1)), Fraction(0))
        return left + right

    def squared_norm(self) -> Fraction:
        alpha = self.base.coefficients
        base_norm = sum(
            (ai * aj / (i + j + 1) for i, ai in enumerate(alpha) for j, aj in enumerate(alpha)),
            Fraction(0),
        )
        x = self.anchor
        return x * base_norm + (1 - x) * base_norm

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        x = float(self.anchor)
        left = self.base(np.clip(z / x, 0.0, 1.0))
        right = self.base(np.clip((1.0 - z) / (1.0 - x), 0.0, 1.0))
        return np.where(z <= x, left, right)


def build_auxiliary(m: int, x) -> AuxiliaryMomentFunction:
    fx = _as_anchor(x)
    if fx in (0, 1):
        raise DomainError("auxiliary function needs an interior anchor; use w_m^x at 0 or 1")
    if m < 1:
        raise DomainError("moment order must be positive")
    return AuxiliaryMomentFunction(int(m), fx)


@dataclass(frozen=True)
class ProductWeight:
    m: int
    anchors: tuple
    density: object = field(default_factory=UniformDensity)
    factors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(build_moment_polynomial(self.m, a) for a in self.anchors))

    @property
    def d(self) -> int:
        return len(self.anchors)

    @property
    def c_p(self) -> float:
        return self.density.c_p

    def factor_product(self, z) -> np.ndarray:
        """prod_i w_m^{x_i}(z_i), i.e. W(z) p(z)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        out = np.ones(z.shape[0])
        for i, w in enumerate(self.factors):
            out = out * w(z[:, i])
        return out

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return self.factor_product(z) / self.density.pdf(z)

    def squared_norm_exact(self) -> Fraction:
        if not self.density.is_uniform:
            raise DensityError("exact norm only available for the uniform density")
        out = Fraction(1)
        for w in self.factors:
            out *= squared_norm(w)
        return out

    def squared_norm(self, q: int | None = None) -> float:
        """||W||^2 in L2(P) = int (prod w_i)^2 / p; tensor Gauss-Legendre for general p."""
        if self.density.is_uniform:
            return float(self.squared_norm_exact())
        q = q or max(self.m + 8, 16)
        nodes, weights = _tensor_gauss(q, self.d)
        vals = self.factor_product(nodes)
        return float(np.sum(weights * vals**2 / self.density.pdf(nodes)))

    def norm_bound(self) -> float:
        return self.c_p * float(self.m) ** (2 * self.d)


def _tensor_gauss(q: int, d: int):
    t, wt = np.polynomial.legendre.leggauss(q)
    z1, w1 = (t + 1.0) / 2.0, wt / 2.0
    grids = np.meshgrid(*([z1] * d), indexing="ij")
    wgrids = np.meshgrid(*([w1] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return nodes, weights


def build_product_weight(m: int, x: Sequence, density=None) -> ProductWeight:
    x = tuple(_as_anchor(v) for v in np.atleast_1d(np.asarray(x, dtype=object)))
    density = density if density is not None else UniformDensity(len(x))
    if density.d != len(x):
        raise DomainError(f"density dimension {density.d} != anchor dimension {len(x)}")
    probe = np.linspace(0.0, 1.0, 5)
    grid = np.stack(np.meshgrid(*([probe] * len(x)), indexing="ij"), -1).reshape(-1, len(x))
    if np.any(density.pdf(grid) <= 0) or not np.isfinite(density.c_p) or density.c_p <= 0:
        raise DensityError("density must be strictly positive with finite c_p")
    return ProductWeight(int(m), x, density)


def multivariate_moment_check(W: ProductWeight, y: Sequence, ell: int, q: int) -> float:
    """|int (||y-z||^2)^ell W p dz - (||y-x||^2)^ell| by tensor Gauss-Legendre."""
    if ell < 0 or 2 * ell > W.m - 1:
        raise ConstraintError(f"need 0 <= 2*ell <= m-1, got ell={ell}, m={W.m}")
    if q < W.m + 2 * ell:
        raise ConstraintError(f"quadrature order {q} < m + 2*ell = {W.m + 2 * ell}")
    y = np.asarray(y, dtype=float)
    if y.shape != (W.d,):
        raise DomainError("evaluation point has wrong dimension")
    nodes, weights = _tensor_gauss(q, W.d)
    integrand = np.sum((y - nodes) ** 2, axis=1) ** ell * W(nodes) * W.density.pdf(nodes)
    lhs = float(np.sum(weights * integrand))
    x = np.array([float(a) for a in W.anchors])
    return abs(lhs - float(np.sum((y - x) ** 2)) ** ell)
