"""Radial kernels and every closed-form constant and bound built on them.

Kernels have the shape ``k(x, y) = phi(||x - y||^2)`` with
``phi(u) = sum_l a_l u^l / l!``.  For the Gaussian ``exp(-sigma r^2)``,
``a_l = (-sigma)^l``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial.distance import cdist

from .density import UniformDensity
from .errors import DomainError, PreconditionError, SeriesError, ShapeError

TAIL_RTOL = 1e-30
MAX_SERIES_TERMS = 100_000


@dataclass(frozen=True)
class RadialKernelSpec:
    family: str
    sigma: float
    d: int = 1
    density: object = None
    coefficient: Optional[Callable[[int], float]] = field(default=None, compare=False)
    phi: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in ("gaussian", "custom-series"):
            raise DomainError(f"unknown kernel family {self.family!r}")
        if not self.sigma > 0:
            raise DomainError("bandwidth sigma must be positive")
        if self.d < 1:
            raise DomainError("dimension must be >= 1")
        if self.density is None:
            object.__setattr__(self, "density", UniformDensity(self.d))
        if self.density.d != self.d:
            raise DomainError("density dimension does not match kernel dimension")
        if self.family == "custom-series":
            if self.coefficient is None:
                raise DomainError("custom-series kernels need a coefficient generator")
            _check_convergence(self)

    @property
    def p_min(self) -> float:
        return self.density.p_min

    @property
    def p_max(self) -> float:
        return self.density.p_max

    @property
    def c_p(self) -> float:
        return self.density.c_p

    def abs_coefficient(self, ell: int) -> float:
        if self.family == "gaussian":
            return self.sigma**ell
        return abs(float(self.coefficient(ell)))

    def log_abs_coefficient(self, ell: int) -> float:
        if self.family == "gaussian":
            return ell * math.log(self.sigma)
        a = abs(self.coefficient(ell))  # exact ints keep huge coefficients out of float range
        return math.log(a) if a > 0 else -math.inf

    def profile(self, u):
        """phi(u) for squared distances u."""
        u = np.asarray(u, dtype=float)
        if self.family == "gaussian":
            return np.exp(-self.sigma * u)
        if self.phi is not None:
            return self.phi(u)
        acc = np.zeros_like(u)
        term_scale = 1.0
        for ell in range(200):
            a = float(self.coefficient(ell))
            if a:
                acc = acc + a * u**ell / term_scale
            term_scale *= ell + 1
        return acc

    def to_dict(self) -> dict:
        if self.family != "gaussian":
            raise DomainError("only Gaussian kernels are serializable")
        return {"family": "gaussian", "sigma": self.sigma, "d": self.d, "density": self.density.to_dict()}


def gaussian(sigma: float = 1.0, d: int = 1, density=None) -> RadialKernelSpec:
    return RadialKernelSpec("gaussian", float(sigma), int(d), density)


def custom_series(coefficient, d: int = 1, density=None, phi=None, sigma: float = 1.0) -> RadialKernelSpec:
    return RadialKernelSpec("custom-series", float(sigma), int(d), density, coefficient, phi)


def _series_log_term(spec: RadialKernelSpec, ell: int) -> float:
    return spec.log_abs_coefficient(ell) + ell * math.log(spec.d) - math.lgamma(ell + 1)


def _check_convergence(spec: RadialKernelSpec) -> None:
    # ratio test over the first 200 terms: the nonzero tail must be shrinking
    logs = [_series_log_term(spec, ell) for ell in range(200)]
    tail = [v for v in logs[100:] if v > -math.inf]
    if len(tail) >= 2 and max(b - a for a, b in zip(tail, tail[1:])) >= 0.0:
        raise SeriesError("Taylor series |a_l| d^l / l! does not pass the ratio test")


def kernel_matrix(spec: RadialKernelSpec, X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != spec.d or Y.shape[1] != spec.d:
        raise ShapeError(f"points must have dimension {spec.d}")
    return spec.profile(cdist(X, Y, "sqeuclidean"))


def kernel_eval(spec: RadialKernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (spec.d,) or y.shape != (spec.d,):
        raise ShapeError(f"points must have dimension {spec.d}")
    return float(spec.profile(np.sum((x - y) ** 2)))


def taylor_tail(spec: RadialKernelSpec, start: int) -> float:
    """sum_{l >= start} |a_l| d^l / l!."""
    if start < 0:
        raise DomainError("tail start must be >= 0")
    terms = []
    total = 0.0
    prev = -math.inf
    for ell in range(start, start + MAX_SERIES_TERMS):
        lt = _series_log_term(spec, ell)
        t = math.exp(lt) if lt > -745 else 0.0
        terms.append(t)
        total += t
        decreasing = lt <= prev
        prev = lt
        if spec.family == "custom-series" and t == 0.0:
            if ell >= 200:
                break
            continue
        if decreasing and t <= TAIL_RTOL * total:
            break
        if decreasing and total == 0.0 and lt < -745:
            break
    else:
        raise SeriesError("Taylor tail did not converge")
    return math.fsum(terms)


def taylor_uniform_bound(spec: RadialKernelSpec, m: int) -> float:
    """(1 + c_p^{1/2} m^d) * tail starting at floor((m-1)/2) + 1."""
    if m < 1:
        raise DomainError("m must be >= 1")
    return (1.0 + math.sqrt(spec.c_p) * m**spec.d) * taylor_tail(spec, (m - 1) // 2 + 1)


def _require_gaussian(spec: RadialKernelSpec) -> None:
    if spec.family != "gaussian":
        raise DomainError("this bound is specific to the Gaussian kernel")


@dataclass(frozen=True)
class GaussianConstants:
    c_sigma: float
    c0: float
    c1: float
    c2: float

    @property
    def c(self) -> float:
        return max(self.c0, self.c1, self.c2, 1.0)


def gaussian_constants(spec: RadialKernelSpec) -> GaussianConstants:
    _require_gaussian(spec)
    d, cp = spec.d, spec.c_p
    c_sigma = max(1.0, 2.0 * math.e * spec.sigma * d)
    ln2, ln3 = math.log(2.0), math.log(3.0)
    c0 = (ln3 + (d - 1) * ln2 + 0.5 * math.log(cp) + d * math.log(3.0 * c_sigma * d)) / (2.0 * d * ln3)
    c1 = ((2 * d - 1) * ln2 + d * math.log(3.0 * c_sigma) + 0.5 * math.log(cp)) / d + 1.0
    c2 = ((2 * d - 1) * ln2 + 0.5 * math.log(cp)) / d
    return GaussianConstants(c_sigma, c0, c1, c2)


def uniform_threshold_t(spec: RadialKernelSpec) -> float:
    """Smallest t admitted by the sup-norm schedule bound: max(c0, 1)."""
    return max(gaussian_constants(spec).c0, 1.0)


def _gaussian_bound_parts(spec: RadialKernelSpec, m: int):
    _require_gaussian(spec)
    half = m // 2
    sed = spec.sigma * math.e * spec.d
    if half <= sed:
        raise PreconditionError(f"floor(m/2) > sigma*e*d violated: {half} <= {sed:.6g}")
    C = 1.0 / (1.0 - sed / half)
    return half, sed, C


def gaussian_uniform_bound(spec: RadialKernelSpec, m: int, strict: bool = True) -> float:
    """(1 + c_p^{1/2} m^d) C(sigma, m) (floor(m/2)/(sigma e d))^(-floor(m/2)).

    The decaying exponent is the one the geometric-series argument
    produces.  Only floor(m/2) > sigma e d is required; m > c_sigma + 1
    implies it.  With ``strict=False`` a violated precondition yields +inf.
    """
    try:
        half, sed, C = _gaussian_bound_parts(spec, m)
    except PreconditionError:
        if strict:
            raise
        return math.inf
    lead = 1.0 + math.sqrt(spec.c_p) * m**spec.d
    return lead * C * math.exp(-half * math.log(half / sed))


def positive_exponent_uniform_bound(spec: RadialKernelSpec, m: int) -> float:
    """Same expression with a positive exponent; grows without bound in m and is kept as a sign regression guard."""
    half, sed, C = _gaussian_bound_parts(spec, m)
    lead = 1.0 + math.sqrt(spec.c_p) * m**spec.d
    return lead * C * math.exp(half * math.log(half / sed))


def schedule_m(spec: RadialKernelSpec, s: float) -> int:
    """m(s) = ceil(3 c_sigma s) + 2."""
    if not s > 0:
        raise DomainError("s must be positive")
    return math.ceil(3.0 * gaussian_constants(spec).c_sigma * s) + 2


def schedule_sup_bound(t: float, d: int) -> float:
    """3 (t d)^(-3 t d)."""
    s = t * d
    return 3.0 * math.exp(-3.0 * s * math.log(s))


def rkhs_schedule_bound(s: float) -> float:
    """9 s^(-2 s)."""
    return 9.0 * math.exp(-2.0 * s * math.log(s))


def s_of_lambda(spec: RadialKernelSpec, lam: float, constants: GaussianConstants | None = None) -> float:
    if not lam > 0:
        raise DomainError("lambda must be positive")
    k = constants or gaussian_constants(spec)
    return max(-0.5 * math.log(lam / 9.0), spec.d * k.c, math.e)


def ninf_growth_bound(spec: RadialKernelSpec, lam: float, constants: GaussianConstants | None = None) -> float:
    """9 c_p (3 c_sigma s(lambda) + 2)^(2d) + 1."""
    k = constants or gaussian_constants(spec)
    s = s_of_lambda(spec, lam, k)
    return 9.0 * spec.c_p * (3.0 * k.c_sigma * s + 2.0) ** (2 * spec.d) + 1.0


def eigenfunction_bound(spec: RadialKernelSpec, mu: float, constants: GaussianConstants | None = None) -> float:
    """sqrt(18 c_p) (3 c_sigma s(mu) + 2)^d + sqrt(2)."""
    if not mu > 0:
        raise DomainError("eigenvalue must be positive")
    k = constants or gaussian_constants(spec)
    s = s_of_lambda(spec, mu, k)
    return math.sqrt(18.0 * spec.c_p) * (3.0 * k.c_sigma * s + 2.0) ** spec.d + math.sqrt(2.0)


def h_of_ell(spec: RadialKernelSpec, ell: int, C_fit: float, c_fit: float,
             constants: GaussianConstants | None = None) -> float:
    """h(l) with (C_fit, c_fit) standing in for the eigenvalue-decay constants."""
    if ell < 1:
        raise DomainError("ell must be >= 1")
    if not (C_fit > 0 and c_fit > 0):
        raise DomainError("fit constants must be positive")
    k = constants or gaussian_constants(spec)
    d = spec.d
    inner = 0.5 * math.log(9.0) - 0.5 * math.log(C_fit) + 0.5 * c_fit * (ell + d) ** (2.0 / d)
    return (3.0 * k.c_sigma * max(inner, 0.0) + 2.0) ** d


def eigenfunction_bound_full(spec: RadialKernelSpec, ell: int, C_fit: float, c_fit: float,
                             constants: GaussianConstants | None = None) -> float:
    """sqrt(18 c_p) max{h(l), (3 c_sigma e + 2)^d, (3 c_sigma d c + 2)^d} + sqrt(2)."""
    k = constants or gaussian_constants(spec)
    d = spec.d
    h = h_of_ell(spec, ell, C_fit, c_fit, k)
    floor = max((3.0 * k.c_sigma * math.e + 2.0) ** d, (3.0 * k.c_sigma * d * k.c + 2.0) ** d)
    return math.sqrt(18.0 * spec.c_p) * max(h, floor) + math.sqrt(2.0)


def effective_dimension_quantities(mu, lam: float):
    """(N(lambda), g(lambda)) for a non-increasing positive eigenvalue list."""
    mu = np.asarray(mu, dtype=float)
    if mu.size == 0:
        raise DomainError("eigenvalue list is empty")
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if np.any(mu <= 0):
        raise DomainError("eigenvalues must be positive")
    ratios = mu / (lam + mu)
    N = float(math.fsum(ratios[ratios >= 1e-16]))
    g = math.log(2.0 * math.e * (lam + mu[0]) / mu[0] * N) if N > 0 else -math.inf
    return N, g


def concentration_lhs(tau: float, g: float, ninf: float, n: int) -> float:
    r = tau * g * ninf / n
    return 4.0 / 3.0 * r + math.sqrt(2.0 * r)


def concentration_condition(spec: RadialKernelSpec, mu, lam: float, tau: float, n: int, ninf: float):
    if tau < 1 or n < 1 or not ninf > 0:
        raise DomainError("need tau >= 1, n >= 1 and ninf > 0")
    _, g = effective_dimension_quantities(mu, lam)
    lhs = concentration_lhs(tau, g, ninf, n)
    return lhs, lhs <= 0.5


def support_count(ninf_value: float, lam: float) -> int:
    """ceil(max(67, 5 * ninf) * ln(1/lambda))."""
    if not 0 < lam < 1:
        raise DomainError("lambda must lie in (0, 1)")
    return math.ceil(max(67.0, 5.0 * ninf_value) * math.log(1.0 / lam))


def nystrom_support_points(spec: RadialKernelSpec, lam: float, constants: GaussianConstants | None = None) -> int:
    if not 0 < lam < 1:
        raise DomainError("lambda must lie in (0, 1)")
    return support_count(ninf_growth_bound(spec, lam, constants), lam)


@dataclass
class BoundReport:
    name: str
    params: dict
    theoretical: float
    empirical: Optional[float] = None
    tolerance: float = 0.0
    flag: str = ""

    @property
    def margin(self) -> float:
        if self.empirical is None:
            return math.nan
        return self.theoretical - self.empirical

    @property
    def passed(self) -> bool:
        if self.empirical is None:
            return True
        return self.empirical <= self.theoretical + self.tolerance
