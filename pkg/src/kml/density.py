"""Design densities on the unit cube.

A density handle supplies its bounds up front (``p_min``, ``p_max`` and
``c_p = sup 1/p``); nothing downstream estimates them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DensityError, DomainError


@dataclass(frozen=True)
class UniformDensity:
    d: int = 1

    kind = "uniform"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be >= 1")

    @property
    def p_min(self) -> float:
        return 1.0

    @property
    def p_max(self) -> float:
        return 1.0

    @property
    def c_p(self) -> float:
        return 1.0

    @property
    def is_uniform(self) -> bool:
        return True

    def pdf(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.ones(z.shape[0])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.random((n, self.d))

    def to_dict(self) -> dict:
        return {"kind": "uniform"}


@dataclass(frozen=True)
class PerturbedDensity:
    """Product of linear perturbations ``1 + beta (2 z_i - 1)``, ``0 <= beta < 1``.

    Each factor integrates to one on [0, 1], so
    ``p_min = (1-beta)^d`` and ``p_max = (1+beta)^d``.
    """

    d: int = 1
    beta: float = 0.5

    kind = "perturbed"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be >= 1")
        if not 0.0 <= self.beta < 1.0:
            raise DensityError(f"beta must lie in [0, 1) for a positive density, got {self.beta}")

    @property
    def p_min(self) -> float:
        return (1.0 - self.beta) ** self.d

    @property
    def p_max(self) -> float:
        return (1.0 + self.beta) ** self.d

    @property
    def c_p(self) -> float:
        return 1.0 / self.p_min

    @property
    def is_uniform(self) -> bool:
        return self.beta == 0.0

    def pdf(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.prod(1.0 + self.beta * (2.0 * z - 1.0), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random((n, self.d))
        if self.beta == 0.0:
            return u
        # inverse of F(z) = (1 - beta) z + beta z^2, rationalized to avoid cancellation at small beta
        b = self.beta
        z = 2.0 * u / ((1.0 - b) + np.sqrt((1.0 - b) ** 2 + 4.0 * b * u))
        return np.minimum(z, 1.0)

    def to_dict(self) -> dict:
        return {"kind": "perturbed", "beta": self.beta}


def density_from_dict(spec: dict | None, d: int):
    """``{"kind": "uniform"}`` or ``{"kind": "perturbed", "beta": b}``.

    The perturbed family may also be given through ``p_min`` (and optionally
    ``p_max``); the two must be consistent with a single ``beta``.
    """
    if not spec or spec.get("kind", "uniform") == "uniform":
        return UniformDensity(d)
    if spec["kind"] != "perturbed":
        raise DensityError(f"unknown density kind {spec['kind']!r}")
    if "beta" in spec:
        beta = float(spec["beta"])
    elif "p_min" in spec:
        beta = 1.0 - float(spec["p_min"]) ** (1.0 / d)
    elif "p_max" in spec:
        beta = float(spec["p_max"]) ** (1.0 / d) - 1.0
    else:
        beta = 0.5
    dens = PerturbedDensity(d, beta)
    for key in ("p_min", "p_max"):
        if key in spec and abs(getattr(dens, key) - float(spec[key])) > 1e-12 * max(1.0, float(spec[key])):
            raise DensityError(f"{key}={spec[key]} is inconsistent with beta={beta:.6g} in dimension {d}")
    return dens
