"""Nystrom kernel ridge regression and regularization-schedule experiments.

The estimator minimizes ``(1/n) sum (f(x_i) - y_i)^2 + lambda ||f||_k^2`` over
``f = sum_j alpha_j k(., z_j)`` with support points ``z_j`` drawn uniformly
without replacement from the inputs.  It is solved in the eigenbasis of
``K_mm``: features ``Phi = K_nm U S^(-1/2)`` followed by the ridge system
``(Phi^T Phi + n lambda I) beta = Phi^T y``.  With ``m = n`` this is exactly
``K (K + n lambda I)^(-1) y``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .density import UniformDensity
from .errors import ConfigError, DomainError, NumericalError, SizeError
from .kernels import RadialKernelSpec, gaussian, kernel_matrix, nystrom_support_points

JITTER_RTOL = 1e-14
MAX_ESCALATIONS = 3


def _constant(X):
    return np.ones(X.shape[0])


def _gauss_bump(X):
    return np.exp(-np.sum((X - 0.5) ** 2, axis=1))


def _sine(X):
    return np.prod(np.sin(np.pi * X), axis=1)


TARGETS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "constant": _constant,
    "gauss_bump": _gauss_bump,
    "sine": _sine,
}


def target_function(target_id: str):
    try:
        return TARGETS[target_id]
    except KeyError:
        raise ConfigError(f"unknown target {target_id!r}; choose from {sorted(TARGETS)}") from None


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    target_id: str = "custom"
    noise: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.targets.shape[0]:
            raise SizeError("inputs and targets must have matching lengths")
        if np.any(self.inputs < 0) or np.any(self.inputs > 1):
            raise DomainError("inputs must lie in the unit cube")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx], self.target_id, self.noise, self.seed)


def generate_dataset(d: int, n: int, target: str = "gauss_bump", noise: float = 0.0, seed: int = 0,
                     density=None) -> Dataset:
    if n < 10:
        raise SizeError("need at least 10 samples")
    if noise < 0:
        raise DomainError("noise level must be nonnegative")
    f = target_function(target)
    density = density or UniformDensity(d)
    rng = _rng(seed)
    X = density.sample(rng, n)
    y = f(X) + noise * rng.standard_normal(n)
    return Dataset(X, y, target, noise, seed)


@dataclass(frozen=True, eq=False)
class NystromModel:
    kernel: RadialKernelSpec
    support: np.ndarray
    support_index: np.ndarray
    coefficients: np.ndarray
    lam: float
    jitter_level: int
    effective_rank: int
    residual_norm: float

    @property
    def m(self) -> int:
        return self.support.shape[0]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.kernel.d)
        return kernel_matrix(self.kernel, X, self.support) @ self.coefficients


def select_support(n: int, m: int, seed: int) -> np.ndarray:
    if not 1 <= m <= n:
        raise SizeError(f"support size must lie in 1..{n}")
    return np.sort(_rng(seed).choice(n, size=m, replace=False))


def _jittered_cholesky(G: np.ndarray):
    base = JITTER_RTOL * max(np.trace(G) / G.shape[0], np.finfo(float).tiny)
    eye = np.eye(G.shape[0])
    for level in range(MAX_ESCALATIONS + 2):
        jitter = 0.0 if level == 0 else base * 10.0 ** (level - 1)
        try:
            return sla.cho_factor(G + jitter * eye, lower=True), level
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("ridge system singular after jitter escalation")


def fit_nystrom(data: Dataset, kernel: RadialKernelSpec, m: int, lam: float, seed: int = 0,
                support_index: Optional[Sequence[int]] = None) -> NystromModel:
    if lam < 0 or math.isnan(lam):
        raise DomainError("lambda must be nonnegative")
    n = data.n
    idx = select_support(n, m, seed) if support_index is None else np.asarray(support_index)
    if not 1 <= idx.size <= n:
        raise SizeError(f"support size must lie in 1..{n}")
    Z = data.inputs[idx]
    if math.isinf(lam):
        return NystromModel(kernel, Z, idx, np.zeros(idx.size), lam, 0, 0, float(np.sqrt(np.mean(data.targets**2))))
    Kmm = kernel_matrix(kernel, Z, Z)
    Knm = kernel_matrix(kernel, data.inputs, Z)
    s, U = np.linalg.eigh(Kmm)
    keep = s > JITTER_RTOL * np.trace(Kmm) / idx.size
    if not np.any(keep):
        raise NumericalError("support kernel matrix is numerically zero")
    T = U[:, keep] / np.sqrt(s[keep])
    Phi = Knm @ T
    G = Phi.T @ Phi + n * lam * np.eye(T.shape[1])
    factor, level = _jittered_cholesky(G)
    beta = sla.cho_solve(factor, Phi.T @ data.targets)
    alpha = T @ beta
    if not np.all(np.isfinite(alpha)):
        raise NumericalError("non-finite Nystrom coefficients")
    resid = float(np.sqrt(np.mean((Phi @ beta - data.targets) ** 2)))
    return NystromModel(kernel, Z, idx, alpha, lam, level, int(keep.sum()), resid)


@dataclass(frozen=True, eq=False)
class KrrModel:
    kernel: RadialKernelSpec
    inputs: np.ndarray
    coefficients: np.ndarray
    lam: float

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.kernel.d)
        return kernel_matrix(self.kernel, X, self.inputs) @ self.coefficients


def krr_fit(data: Dataset, kernel: RadialKernelSpec, lam: float) -> KrrModel:
    """Full kernel ridge regression, (K + n lambda I) c = y."""
    if lam <= 0:
        raise DomainError("full KRR needs lambda > 0")
    K = kernel_matrix(kernel, data.inputs, data.inputs)
    c = sla.solve(K + data.n * lam * np.eye(data.n), data.targets, assume_a="pos")
    return KrrModel(kernel, data.inputs, c, lam)


def required_support(kernel: RadialKernelSpec, lam: float) -> int:
    return nystrom_support_points(kernel, lam)


LAMBDA_SCHEDULES = ("inv_n", "exp_root", "fixed")


def schedule_lambda(name: str, n: int, d: int, fixed: float = 1e-12) -> float:
    if name == "inv_n":
        return 1.0 / n
    if name == "exp_root":
        return math.exp(-(n ** (1.0 / (2 * d + 1))))
    if name == "fixed":
        return fixed
    raise ConfigError(f"unknown lambda schedule {name!r}")


@dataclass
class ScheduleConfig:
    n_values: list = field(default_factory=lambda: [128, 256, 512])
    d: int = 1
    sigma: float = 1.0
    target: str = "gauss_bump"
    noise: float = 0.0
    lambda_schedules: list = field(default_factory=lambda: list(LAMBDA_SCHEDULES))
    fixed_lambda: float = 1e-12
    m_values: list = field(default_factory=lambda: [64])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    density: Optional[dict] = None


@dataclass(frozen=True)
class ScheduleRow:
    n: int
    d: int
    sigma: float
    lam: float
    m: int
    seed: int
    train_rmse: float
    test_rmse: float
    jitter_level: int
    schedule: str = ""

    CSV_HEADER = ("n", "d", "sigma", "lambda", "m", "seed", "train_rmse", "test_rmse", "jitter_level")

    def csv_fields(self) -> list:
        return [self.n, self.d, repr(self.sigma), repr(self.lam), self.m, self.seed,
                repr(self.train_rmse), repr(self.test_rmse), self.jitter_level]


def holdout_split(n: int, seed: int):
    """Fixed one-fifth test split from a seed-derived permutation."""
    perm = _rng(seed + 0x5EED).permutation(n)
    k = n // 5
    return np.sort(perm[k:]), np.sort(perm[:k])


def _rmse(a, b) -> float:
    return float(np.sqrt(np.mean((a - b) ** 2)))


def run_cell(data: Dataset, kernel: RadialKernelSpec, lam: float, m: int, seed: int, schedule: str = ""):
    train_idx, test_idx = holdout_split(data.n, seed)
    train, test = data.subset(train_idx), data.subset(test_idx)
    model = fit_nystrom(train, kernel, min(m, train.n), lam, seed)
    return ScheduleRow(data.n, data.d, kernel.sigma, lam, model.m, seed,
                       _rmse(model.predict(train.inputs), train.targets),
                       _rmse(model.predict(test.inputs), test.targets),
                       model.jitter_level, schedule)


def schedule_experiment(cfg: ScheduleConfig, jobs: int = 1) -> list:
    from .density import density_from_dict

    density = density_from_dict(cfg.density, cfg.d)
    kernel = gaussian(cfg.sigma, cfg.d, density)
    cells = []
    for n in cfg.n_values:
        for seed in cfg.seeds:
            for name in cfg.lambda_schedules:
                lam = schedule_lambda(name, n, cfg.d, cfg.fixed_lambda)
                for m in cfg.m_values:
                    cells.append((n, seed, name, lam, m))
    datasets = {}

    def work(cell):
        n, seed, name, lam, m = cell
        key = (n, seed)
        if key not in datasets:
            datasets[key] = generate_dataset(cfg.d, n, cfg.target, cfg.noise, seed, density)
        return run_cell(datasets[key], kernel, lam, m, seed, name)

    for n in cfg.n_values:
        for seed in cfg.seeds:
            datasets[(n, seed)] = generate_dataset(cfg.d, n, cfg.target, cfg.noise, seed, density)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(work, cells))
    return [work(c) for c in cells]
