"""Minimal spacing of i.i.d. uniforms, Gram-eigenvalue Monte Carlo and
the lattice-count / tensor-spectrum checks.

All sampling uses numpy's Philox generator.  A run of ``R`` replications
is split into fixed-size chunks, each with its own spawned sub-stream, so
results do not depend on how chunks are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, stats

from .errors import DomainError, NumericalError, SizeError
from .spectral import tensor_log_spectrum

CHUNK = 1 << 16


@dataclass(frozen=True)
class MinGapLaw:
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise SizeError("need at least two points for a gap")

    @property
    def support_end(self) -> float:
        return 1.0 / (self.n - 1)


@dataclass(frozen=True)
class McEstimate:
    value: float
    se: float
    replications: int
    seed: int

    def __post_init__(self):
        if self.replications < 1:
            raise SizeError("replications must be >= 1")
        if self.se < 0:
            raise DomainError("standard error must be nonnegative")

    @classmethod
    def from_samples(cls, samples, seed: int) -> "McEstimate":
        samples = np.asarray(samples, dtype=float)
        se = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
        return cls(float(samples.mean()), se, int(samples.size), int(seed))


def min_gap_density(law: MinGapLaw, m: float) -> float:
    n = law.n
    if m < 0 or m > law.support_end:
        return 0.0
    return n * (n - 1) * (1.0 - (n - 1) * m) ** (n - 1)


def min_gap_survival(law: MinGapLaw, m: float) -> float:
    """P(M > m) = (1 - (n-1) m)^n on the support."""
    base = min(max(1.0 - (law.n - 1) * m, 0.0), 1.0)
    return base**law.n


def min_gap_cdf(law: MinGapLaw, m):
    base = np.clip(1.0 - (law.n - 1) * np.asarray(m, dtype=float), 0.0, 1.0)
    return 1.0 - base**law.n


def _chunk_rngs(seed: int, R: int):
    sizes = [CHUNK] * (R // CHUNK) + ([R % CHUNK] if R % CHUNK else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    return [(np.random.Generator(np.random.Philox(ss)), k) for ss, k in zip(children, sizes)]


def _run_chunks(fn, seed: int, R: int, jobs: int = 1) -> np.ndarray:
    tasks = _chunk_rngs(seed, R)
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(jobs) as pool:
            parts = list(pool.map(lambda t: fn(*t), tasks))
    else:
        parts = [fn(*t) for t in tasks]
    return np.concatenate(parts)


def sample_min_gap(law: MinGapLaw, seed: int, R: int, jobs: int = 1) -> np.ndarray:
    """R draws of the smallest pairwise distance among n uniforms on [0, 1]."""
    if R < 1:
        raise SizeError("replications must be >= 1")

    def draw(rng, k):
        u = np.sort(rng.random((k, law.n)), axis=1)
        return np.diff(u, axis=1).min(axis=1)

    return _run_chunks(draw, seed, R, jobs)


def ks_statistic(law: MinGapLaw, samples) -> float:
    return float(stats.kstest(samples, lambda m: min_gap_cdf(law, m)).statistic)


def gap_scale(law: MinGapLaw, c: float) -> float:
    """a = min{c^(-2/3)/3, 1/(2(n-1))}."""
    if c <= 0:
        raise DomainError("c must be positive")
    return min(c ** (-2.0 / 3.0) / 3.0, 1.0 / (2.0 * (law.n - 1)))


def exp_lower_bound(law: MinGapLaw, c: float) -> float:
    """The stated lower bound 4 exp(-2c/a^2) for E exp(-c/M^2)."""
    a = gap_scale(law, c)
    return 4.0 * math.exp(-2.0 * c / a**2)


def exp_lower_bound_corrected(law: MinGapLaw, c: float) -> float:
    """exp(-(n-1))/4 * exp(-2c/a^2), a lower bound that survives Monte Carlo."""
    a = gap_scale(law, c)
    return math.exp(-(law.n - 1)) / 4.0 * math.exp(-2.0 * c / a**2)


def exp_expectation_quad(law: MinGapLaw, c: float) -> float:
    """E exp(-c/M^2) by adaptive quadrature against the gap density."""
    val, _ = integrate.quad(lambda m: math.exp(-c / m**2) * min_gap_density(law, m) if m > 0 else 0.0,
                            0.0, law.support_end, limit=200, epsabs=1e-14)
    return val


def expectation_exp_bound(law: MinGapLaw, c: float, seed: int, R: int, jobs: int = 1):
    """Monte Carlo E exp(-c/M^2) together with the stated closed-form lower bound."""
    if c <= 0:
        raise DomainError("c must be positive")
    gaps = sample_min_gap(law, seed, R, jobs)
    return McEstimate.from_samples(np.exp(-c / gaps**2), seed), exp_lower_bound(law, c)


def gram_min_eigen_experiment(sigma: float, n: int, seed: int, R: int) -> McEstimate:
    """Mean smallest eigenvalue of the n x n Gaussian Gram matrix at uniform points."""
    if n < 1 or n > 60:
        raise SizeError("n must lie in 1..60")
    if R < 1 or R > 2000:
        raise SizeError("R must lie in 1..2000")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    out = np.empty(R)
    for r in range(R):
        u = rng.random(n)
        K = np.exp(-sigma * (u[:, None] - u[None, :]) ** 2)
        lo = np.linalg.eigvalsh(K)[0]
        if lo < -1e-10:
            raise NumericalError(f"Gram matrix not PSD: smallest eigenvalue {lo:.3e}")
        out[r] = lo
    return McEstimate.from_samples(out, seed)


class StarsBars(NamedTuple):
    lhs: int
    rhs_proof: float
    holds: bool


def count_compositions(d: int, n: int) -> int:
    """Number of (i_1..i_d) with every i_k >= 1 and i_1+...+i_d <= n, by enumeration."""
    if d == 0:
        return 1
    return sum(count_compositions(d - 1, n - i) for i in range(1, n - d + 2))


def stars_bars_rhs_proof(d: int, n: int) -> float:
    return (n - 1) ** d / (d * (d - 1) ** (d - 1)) - d


def stars_bars_rhs_statement(d: int, n: int) -> float:
    return (n - 1) ** d / (d - 1) ** (d - 1) - d


def stars_bars_check(d: int, n: int) -> StarsBars:
    if not (2 <= d <= 6 and d <= n <= 20):
        raise SizeError("need 2 <= d <= 6 and d <= n <= 20")
    lhs = count_compositions(d, n)
    rhs = stars_bars_rhs_proof(d, n)
    return StarsBars(lhs, rhs, lhs >= rhs)


def tensor_decay_constants(rho: float, d: int):
    C = math.exp(-8.0 * rho)
    c = 2.0 * d ** (2.0 / d) * (d - 1) ** (2.0 * (d - 1) / d)
    return C, c


def tensor_decay_margins(rho: float, d: int, L: int) -> np.ndarray:
    """log mu_l^(d) - log(C exp(-c rho (l+d)^(2/d))) for l = 1..L."""
    if d not in (2, 3):
        raise SizeError("d must be 2 or 3")
    if L < 1 or L > 500:
        raise SizeError("L must lie in 1..500")
    base = -rho * np.arange(1, L + 1, dtype=float) ** 2
    spec = tensor_log_spectrum(base, d, L)
    C, c = tensor_decay_constants(rho, d)
    ells = np.arange(1, L + 1, dtype=float)
    return spec - (math.log(C) - c * rho * (ells + d) ** (2.0 / d))


def tensor_decay_check(rho: float, d: int, L: int) -> bool:
    return bool(np.all(tensor_decay_margins(rho, d, L) >= 0.0))
