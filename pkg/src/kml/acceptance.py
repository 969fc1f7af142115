"""Acceptance criteria A1-A9 as callable checks shared by the CLI and the tests."""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import exact_hilbert as eh
from .config import Tolerances, active_tolerances
from .kernels import (BoundReport, gaussian, positive_exponent_uniform_bound, gaussian_uniform_bound,
                      ninf_growth_bound, schedule_m, schedule_sup_bound, taylor_uniform_bound,
                      uniform_threshold_t)
from .moments import build_auxiliary, build_moment_polynomial, build_product_weight, moment_integral, squared_norm
from .nystrom import ScheduleConfig, fit_nystrom, generate_dataset, krr_fit, schedule_experiment
from .random_gap import (MinGapLaw, count_compositions, expectation_exp_bound, ks_statistic, sample_min_gap,
                         stars_bars_check, stars_bars_rhs_statement, tensor_decay_check)
from .spectral import (cached_model, eigen_decay_fit, eigenfunction_sup, empirical_ninf, empirical_sup_error,
                       interpolation_check, quadratic_growth_constant)


@dataclass
class CriterionResult:
    cid: str
    title: str
    passed: bool
    elapsed: float
    limit: float
    detail: str = ""
    failures: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" -- {self.detail}" if self.detail else ""
        return f"{self.cid} {status} {self.title} ({self.elapsed:.2f}s / {self.limit:g}s){extra}"


def _finish(cid, title, limit, t0, failures, detail="", reports=()):
    elapsed = time.perf_counter() - t0
    if elapsed > limit:
        failures = list(failures) + [f"runtime {elapsed:.1f}s exceeds {limit:g}s"]
    if failures and not detail:
        detail = "; ".join(failures[:4]) + (" ..." if len(failures) > 4 else "")
    return CriterionResult(cid, title, not failures, elapsed, limit, detail, list(failures), list(reports))


ANCHORS = (Fraction(0), Fraction(1, 5), Fraction(1, 3), Fraction(1, 2), Fraction(3, 4), Fraction(1))


def check_a1(tol: Tolerances) -> CriterionResult:
    t0 = time.perf_counter()
    fails = []
    for m in range(1, 21):
        H, Hi = eh.hilbert_matrix(m), eh.hilbert_inverse(m)
        if H @ Hi != eh.identity(m):
            fails.append(f"H H^-1 != I at m={m}")
        if sum(sum(r) for r in Hi.rows()) != m * m:
            fails.append(f"entry sum != m^2 at m={m}")
        if Hi[0, 0] != m * m:
            fails.append(f"corner entry != m^2 at m={m}")
    return _finish("A1", "exact Hilbert identities", 5.0, t0, fails)


def check_a2(tol: Tolerances) -> CriterionResult:
    t0 = time.perf_counter()
    fails = []
    for m in range(1, 13):
        for x in ANCHORS:
            w = build_moment_polynomial(m, x)
            for ell in range(m):
                if moment_integral(w, ell) != x**ell:
                    fails.append(f"moment {ell} at m={m}, x={x}")
            nrm = squared_norm(w)
            if nrm > m * m or (x in (0, 1) and nrm != m * m):
                fails.append(f"norm {nrm} at m={m}, x={x}")
            if 0 < x < 1 and build_auxiliary(m, x).squared_norm() != m * m:
                fails.append(f"auxiliary norm at m={m}, x={x}")
    return _finish("A2", "moment and norm suite", 10.0, t0, fails)


A3_KERNELS = ((1.0, 1), (1.0, 2), (2.0, 1))


def check_a3(tol: Tolerances) -> CriterionResult:
    t0 = time.perf_counter()
    fails, reports = [], []
    axis = [Fraction(i, 8) for i in range(9)]
    for sigma, d in A3_KERNELS:
        spec = gaussian(sigma, d)
        model = cached_model(sigma, d, 64, eigen=False)
        for m in range(3, 16):
            bound = taylor_uniform_bound(spec, m)
            worst = 0.0
            for x in itertools.product(axis, repeat=d):
                W = build_product_weight(m, list(x), spec.density)
                worst = max(worst, empirical_sup_error(model, W, [float(v) for v in x]))
            rep = BoundReport("taylor_uniform", {"sigma": sigma, "d": d, "m": m}, bound, worst, tol.quadrature)
            reports.append(rep)
            if not rep.passed:
                fails.append(f"sigma={sigma}, d={d}, m={m}: {worst:.3e} > {bound:.3e}")
        t = uniform_threshold_t(spec)
        m = schedule_m(spec, t * d)
        model = cached_model(sigma, d, m + 40, eigen=False)
        bound = schedule_sup_bound(t, d)
        worst = 0.0
        for x in itertools.product(axis, repeat=d):
            W = build_product_weight(m, list(x), spec.density)
            worst = max(worst, empirical_sup_error(model, W, [float(v) for v in x]))
        rep = BoundReport("schedule_sup", {"sigma": sigma, "d": d, "t": t, "m": m}, bound, worst, tol.quadrature)
        reports.append(rep)
        if not rep.passed:
            fails.append(f"schedule sigma={sigma}, d={d}, m={m}: {worst:.3e} > {bound:.3e}")
    return _finish("A3", "uniform-bound dominance", 120.0, t0, fails, reports=reports)


A4_LAMBDAS = tuple(10.0**-e for e in range(2, 13))
SPECTRAL_DPS = 80
A4_DPS = 50


def check_a4(tol: Tolerances) -> CriterionResult:
    """Bound dominance at every lambda, and no growth of ninf / ln(1/lambda)^2.

    "Bounded across the sweep" is checked as: the largest ratio over the
    second half of the sweep does not exceed the largest over the first half.
    """
    t0 = time.perf_counter()
    spec = gaussian(1.0, 1)
    model = cached_model(1.0, 1, 64, A4_DPS)
    fails, reports, ratios = [], [], []
    for lam in A4_LAMBDAS:
        val = empirical_ninf(model, lam, 512)
        rep = BoundReport("ninf_growth", {"lambda": lam}, ninf_growth_bound(spec, lam), val)
        reports.append(rep)
        if not rep.passed:
            fails.append(f"lambda={lam:g}: {val:.4g} > {rep.theoretical:.4g}")
        ratios.append(val / math.log(1.0 / lam) ** 2)
    half = len(ratios) // 2
    if max(ratios[half:]) > max(ratios[:half]):
        fails.append(f"ninf/ln^2 grows: {max(ratios[half:]):.4g} > {max(ratios[:half]):.4g}")
    return _finish("A4", "ninf growth", 60.0, t0, fails,
                   detail="" if fails else f"max ratio {max(ratios):.4f}", reports=reports)


def check_a5(tol: Tolerances) -> CriterionResult:
    t0 = time.perf_counter()
    fails = []
    coarse, fine = cached_model(1.0, 1, 64, SPECTRAL_DPS), cached_model(1.0, 1, 96, SPECTRAL_DPS)
    fit = eigen_decay_fit(fine)
    ells = np.arange(1, fine.rank + 1)
    below = np.log(fit.curve(ells)) <= np.log(fine.eigenvalues)
    if not np.all(below):
        fails.append(f"fitted curve above spectrum at l={int(ells[~below][0])}")
    if min(coarse.rank, fine.rank) < 30:
        fails.append(f"resolved rank {min(coarse.rank, fine.rank)} < 30")
    b64 = quadratic_growth_constant(eigenfunction_sup(coarse, 512, 30))
    b96 = quadratic_growth_constant(eigenfunction_sup(fine, 512, 30))
    if abs(b64 - b96) > 0.1 * b96:
        fails.append(f"b unstable: {b64:.4g} vs {b96:.4g}")
    return _finish("A5", "eigen-decay and eigenfunction growth", 120.0, t0, fails,
                   detail="" if fails else f"c_fit={fit.c_fit:.4g}, b={b96:.4g}")


def check_a6(tol: Tolerances, seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    model = cached_model(1.0, 1, 96, SPECTRAL_DPS)
    b = quadratic_growth_constant(eigenfunction_sup(model, 512, 30))
    rng = np.random.Generator(np.random.Philox(seed))
    s, L = 4.0, 30
    scale = np.arange(1, L + 1, dtype=float) ** -(s + 1.0)
    fails, reports = [], []
    for i in range(100):
        rep = interpolation_check(model, rng.standard_normal(L) * scale, s, b, 512)
        reports.append(rep)
        if not rep.passed:
            fails.append(f"draw {i}: {rep.empirical:.4g} > {rep.theoretical:.4g}")
    worst = max(r.empirical / r.theoretical for r in reports)
    return _finish("A6", "interpolation inequality", 60.0, t0, fails,
                   detail="" if fails else f"worst ratio {worst:.3f}", reports=reports)


A7_N = (2, 5, 10)
A7_C = (0.01, 0.1, 1.0)
A7_R = 10**6


def check_a7(tol: Tolerances, seed: int = 0, jobs: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    fails, reports = [], []
    for n in A7_N:
        law = MinGapLaw(n)
        gaps = sample_min_gap(law, seed + n, A7_R, jobs)
        ks = ks_statistic(law, gaps)
        if ks > 0.002:
            fails.append(f"KS n={n}: {ks:.4g}")
        for c in A7_C:
            mc, lower = expectation_exp_bound(law, c, seed + 1000 * n, A7_R, jobs)
            rep = BoundReport("exp_lower", {"n": n, "c": c}, mc.value + tol.mc_se * mc.se, lower)
            reports.append(rep)
            if not rep.passed:
                fails.append(f"n={n}, c={c}: E={mc.value:.4g} < bound {lower:.4g}")
    for d in range(2, 7):
        for n in range(d, 21):
            if not stars_bars_check(d, n).holds:
                fails.append(f"stars-bars d={d}, n={n}")
    for rho, d, L in ((1.0, 2, 100), (0.5, 3, 200), (0.1, 2, 500), (1.0, 3, 300)):
        if not tensor_decay_check(rho, d, L):
            fails.append(f"tensor decay rho={rho}, d={d}, L={L}")
    return _finish("A7", "min-gap suite", 120.0, t0, fails, reports=reports)


A8_LAMBDAS = (1e-3, 1e-6, 1e-8, 1e-10)


def check_a8(tol: Tolerances, jobs: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    fails = []
    spec = gaussian(1.0, 1)
    data = generate_dataset(1, 200, "gauss_bump", 0.0, 11)
    for lam in A8_LAMBDAS:
        diff = float(np.max(np.abs(fit_nystrom(data, spec, 200, lam, 0).predict(data.inputs)
                                   - krr_fit(data, spec, lam).predict(data.inputs))))
        if not diff <= tol.quadrature:
            fails.append(f"m=n vs KRR at lambda={lam:g}: {diff:.3e}")
    cfg = ScheduleConfig(n_values=[512], lambda_schedules=["inv_n", "fixed"], fixed_lambda=1e-12,
                         m_values=[64], seeds=[0, 1, 2, 3, 4])
    rows = schedule_experiment(cfg, jobs)
    tiny = float(np.mean([r.test_rmse for r in rows if r.schedule == "fixed"]))
    inv = float(np.mean([r.test_rmse for r in rows if r.schedule == "inv_n"]))
    if not tiny <= 1.1 * inv:
        fails.append(f"test RMSE at 1e-12 {tiny:.3e} > 1.1 x {inv:.3e}")
    return _finish("A8", "Nystrom equivalence and small-lambda stability", 120.0, t0, fails,
                   detail="" if fails else f"rmse 1e-12: {tiny:.2e}, 1/n: {inv:.2e}")


def check_a9(tol: Tolerances) -> CriterionResult:
    t0 = time.perf_counter()
    fails = []
    lhs = count_compositions(2, 4)
    if not lhs < stars_bars_rhs_statement(2, 4):
        fails.append("statement form of the lattice bound unexpectedly holds at d=2, n=4")
    if not stars_bars_check(2, 4).holds:
        fails.append("proof form of the lattice bound fails at d=2, n=4")
    spec = gaussian(1.0, 1)
    if not positive_exponent_uniform_bound(spec, 12) > 1.0:
        fails.append("positive-exponent bound does not exceed 1 at m=12")
    if not gaussian_uniform_bound(spec, 12) < 1.0:
        fails.append("negative-exponent bound is not below 1 at m=12")
    return _finish("A9", "known-discrepancy regressions", 1.0, t0, fails)


CHECKS: dict[str, Callable] = {
    "A1": check_a1, "A2": check_a2, "A3": check_a3, "A4": check_a4, "A5": check_a5,
    "A6": check_a6, "A7": check_a7, "A8": check_a8, "A9": check_a9,
}


def run_criteria(only: Optional[list] = None, tol: Optional[Tolerances] = None, jobs: int = 1) -> list:
    tol = tol or active_tolerances()
    ids = list(CHECKS) if not only else only
    out = []
    for cid in ids:
        if cid not in CHECKS:
            raise KeyError(f"unknown criterion {cid!r}")
        fn = CHECKS[cid]
        kwargs = {"jobs": jobs} if cid in ("A7", "A8") else {}
        out.append(fn(tol, **kwargs))
    return out
