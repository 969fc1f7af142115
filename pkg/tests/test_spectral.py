import itertools
import json
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kml.acceptance import SPECTRAL_DPS
from kml.density import PerturbedDensity
from kml.errors import DomainError, FitError, NumericalError, ShapeError, SizeError
from kml.kernels import custom_series, gaussian, kernel_matrix, rkhs_schedule_bound, schedule_m, taylor_uniform_bound
from kml.moments import build_product_weight
from kml.spectral import (apply_operator, build_grid, build_model, cached_model, eigen_decay_fit,
                          eigenfunction_sup, eigenfunction_values, empirical_ninf, empirical_rkhs_error,
                          empirical_sup_error, fit_eigen_decay, interpolation_check, load_model, model_from_dict,
                          model_to_dict, nystrom_extend, quadratic_growth_constant, save_model, tensor_log_spectrum,
                          weight_function)


def _ones(u):
    return np.ones_like(np.asarray(u, dtype=float))


@pytest.fixture(scope="module")
def const_model():
    k = custom_series(lambda l: 1.0 if l == 0 else 0.0, phi=_ones)
    return build_model(k, 16)


def test_grid_weights():
    g = build_grid(2, 12, PerturbedDensity(2, 0.3))
    assert np.all(g.weights > 0)
    assert np.sum(g.measure_weights) == pytest.approx(1.0, abs=1e-8)


def test_constant_kernel(const_model):
    m = const_model
    assert m.rank == 1
    assert m.eigenvalues[0] == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(m.node_values[:, 0], 1.0)
    assert nystrom_extend(m, 1, [0.123]) == pytest.approx(1.0, abs=1e-13)
    assert apply_operator(m, np.ones(16), [0.7]) == pytest.approx(1.0, abs=1e-14)
    assert apply_operator(m, np.zeros(16), [0.7]) == 0.0


def test_rank_one_weight_and_ninf(const_model):
    m = const_model
    rep = weight_function(m, [0.4], m.eigenvalues[0])
    assert rep.coefficients[0] == pytest.approx(0.5 * rep.phi_x[0])
    assert empirical_ninf(m, m.eigenvalues[0], 5) == pytest.approx(0.5)
    assert np.all(weight_function(m, [0.4], math.inf).coefficients == 0)


def test_constant_kernel_sup_error_zero(const_model):
    # only the zeroth moment matters for a constant kernel
    W = build_product_weight(1, [F(1, 3)])
    assert empirical_sup_error(const_model, W, [1 / 3], 20) == pytest.approx(0.0, abs=1e-12)


def test_trace_and_orthonormality(model64):
    g = model64.grid
    assert np.sum(model64.eigenvalues) == pytest.approx(1.0, abs=1e-8)
    assert np.sum(model64.eigenvalues) == pytest.approx(np.sum(g.measure_weights), abs=1e-6)
    gram = model64.node_values.T @ (g.measure_weights[:, None] * model64.node_values)
    assert np.max(np.abs(gram - np.eye(model64.rank))) < 1e-8
    assert np.all(np.diff(model64.eigenvalues) <= 0)


def test_double_precision_spectrum(model64, model96):
    assert model64.rank == 10
    ref = [0.8648416773946, 0.1262186250136, 8.558643249768e-3, 3.690117220e-4]
    assert model64.eigenvalues[:4] == pytest.approx(ref, rel=1e-10)
    assert model64.eigenvalues[0] == pytest.approx(model96.eigenvalues[0], rel=1e-10)


def test_grid_refinement_multiprecision():
    coarse = cached_model(1.0, 1, 64, SPECTRAL_DPS)
    fine = cached_model(1.0, 1, 96, SPECTRAL_DPS)
    rel = np.abs(coarse.eigenvalues[:10] / fine.eigenvalues[:10] - 1)
    assert rel.max() < 1e-8


def test_extension_consistency(model64, hp_model):
    # in double precision the eigenvector residual (~1e-16) is divided by mu_l, so only
    # the well-separated leading pairs reproduce node values to 1e-8
    g = model64.grid
    for i in (0, 17, 40):
        ext = eigenfunction_values(model64, g.nodes[i:i + 1])[0]
        assert ext[:6] == pytest.approx(model64.node_values[i, :6], abs=1e-8)
    g = hp_model.grid
    for i in (0, 20):
        ext = eigenfunction_values(hp_model, g.nodes[i:i + 1])[0]
        assert ext == pytest.approx(hp_model.node_values[i], abs=1e-8)


def test_eigen_relation(model64):
    xs = np.random.default_rng(5).random((50, 1))
    mu = model64.eigenvalues
    for ell in range(1, 11):
        f = model64.node_values[:, ell - 1]
        lhs = apply_operator(model64, f, xs)
        rhs = mu[ell - 1] * eigenfunction_values(model64, xs, [ell])[:, 0]
        assert np.max(np.abs(lhs - rhs)) <= 1e-8 * mu[0]


def test_extension_errors(model64):
    with pytest.raises(IndexError):
        nystrom_extend(model64, model64.rank + 1, [0.5])
    with pytest.raises(ShapeError):
        apply_operator(model64, np.ones(3), [0.5])


def test_build_errors():
    with pytest.raises(SizeError):
        build_model(gaussian(1.0, 1), 6)
    with pytest.raises(SizeError):
        build_model(gaussian(1.0, 2), 142)
    # k(x, y) = 1 - 3 |x - y|^2 is not positive semi-definite
    bad = custom_series(lambda l: [1.0, -3.0][l] if l < 2 else 0.0, phi=lambda u: 1.0 - 3.0 * np.asarray(u))
    with pytest.raises(NumericalError):
        build_model(bad, 32)


def test_weight_function(model64):
    x = [0.37]
    rep = weight_function(model64, x, 1e-4)
    assert rep.l2_norm_sq == pytest.approx(np.sum((rep.factors * rep.phi_x) ** 2))
    assert rep.l2_norm_sq <= rep.mixed_norm
    with pytest.raises(DomainError):
        weight_function(model64, x, -1.0)
    zero = weight_function(model64, x, 0.0)
    assert zero.mixed_norm == pytest.approx(np.sum(zero.phi_x**2), rel=1e-14)
    # Mercer partial sum reproduces k(x, x) = 1 at interior points
    assert np.sum(model64.eigenvalues * zero.phi_x**2) == pytest.approx(1.0, abs=1e-6)


def test_weight_function_reproduces_kernel(model64):
    # (L w)(y) = sum mu^2/(lam+mu) phi(x) phi(y) -> k(x, y) as lam -> 0
    rep = weight_function(model64, [0.2], 1e-13)
    ys = np.linspace(0, 1, 9).reshape(-1, 1)
    Lw = eigenfunction_values(model64, ys) @ (model64.eigenvalues * rep.coefficients)
    assert Lw == pytest.approx(kernel_matrix(model64.kernel, [[0.2]], ys)[0], abs=1e-8)


def test_ninf_monotone(model64):
    vals = [empirical_ninf(model64, 10.0**-e, 64) for e in range(1, 11)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    with pytest.raises(SizeError):
        empirical_ninf(model64, 1e-3, 2)


def test_sup_error_large_m():
    model = cached_model(1.0, 1, 64, eigen=False)
    for x in (0.0, 0.3, 1.0):
        W = build_product_weight(25, [x])
        assert empirical_sup_error(model, W, [x]) <= 1e-6


@pytest.mark.parametrize("m", [3, 6, 9, 12, 15])
def test_sup_error_dominance(m):
    spec = gaussian(1.0, 1)
    model = cached_model(1.0, 1, 64, eigen=False)
    for i in range(9):
        W = build_product_weight(m, [F(i, 8)])
        assert empirical_sup_error(model, W, [i / 8]) <= taylor_uniform_bound(spec, m) + 1e-8


def test_separable_matches_generic():
    sigma = 1.5
    generic = custom_series(lambda l: (-sigma) ** l, d=2, phi=lambda u: np.exp(-sigma * np.asarray(u)), sigma=sigma)
    mg = build_model(generic, 24, eigen=False)
    ms = build_model(gaussian(sigma, 2), 24, eigen=False)
    W = build_product_weight(5, [F(1, 4), F(2, 3)])
    a = empirical_sup_error(mg, W, [0.25, 2 / 3], 12)
    b = empirical_sup_error(ms, W, [0.25, 2 / 3], 12)
    assert a == pytest.approx(b, rel=1e-10)


def test_sup_error_anchor_mismatch(model64):
    with pytest.raises(ShapeError):
        empirical_sup_error(model64, build_product_weight(4, [F(1, 2)]), [0.3])


def test_rkhs_error_properties():
    spec = gaussian(1.0, 1)
    model = cached_model(1.0, 1, 64)
    x = 0.3
    W = build_product_weight(3, [x])
    val = empirical_rkhs_error(model, W, [x])
    g = model.grid
    resid = apply_operator(model, W(g.nodes), g.nodes) - kernel_matrix(spec, [[x]], g.nodes)[0]
    l2 = float(np.sum(g.measure_weights * resid**2))
    assert val >= l2 / model.eigenvalues[0] * (1 - 1e-6)
    m = schedule_m(spec, 2.0)
    big = cached_model(1.0, 1, m + 40)
    W = build_product_weight(m, [0.5])
    assert empirical_rkhs_error(big, W, [0.5]) <= rkhs_schedule_bound(2.0)


def test_decay_fit_synthetic():
    ells = np.arange(1, 21)
    fit = fit_eigen_decay(np.exp(-(ells + 1.0) ** 2), 1)
    assert fit.c_fit == pytest.approx(1.0, abs=1e-8)
    assert fit.C_fit == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(FitError):
        fit_eigen_decay(np.exp(-np.arange(1, 6.0)), 1)


def test_decay_fit_lower_bounds(hp_model):
    fit = eigen_decay_fit(hp_model)
    ells = np.arange(1, hp_model.rank + 1)
    assert np.all(fit.curve(ells) <= hp_model.eigenvalues)
    with pytest.raises(FitError):
        eigen_decay_fit(build_model(custom_series(lambda l: float(l == 0), phi=_ones), 16))


def test_tensor_spectrum_matches_brute_force():
    base = np.log(cached_model(1.0, 1, 64).eigenvalues)
    brute = sorted((a + b for a, b in itertools.product(base, base)), reverse=True)[:40]
    assert tensor_log_spectrum(base, 2, 40) == pytest.approx(brute, rel=1e-14)


def test_eigenfunction_growth(hp_model):
    sups = eigenfunction_sup(hp_model, 256, 20)
    b = quadratic_growth_constant(sups)
    assert np.all(sups <= b * np.arange(1, 21) ** 2 + 1e-12)
    assert sups[0] == pytest.approx(1.0695, abs=1e-4)


def test_interpolation_cases(hp_model):
    sups = eigenfunction_sup(hp_model, 256, 20)
    b = quadratic_growth_constant(sups)
    assert interpolation_check(hp_model, [0.7], 4.0, b, 256).passed
    zero = interpolation_check(hp_model, np.zeros(5), 4.0, b, 256)
    assert zero.empirical == 0.0 and zero.theoretical == 0.0 and zero.passed
    with pytest.raises(DomainError):
        interpolation_check(hp_model, [1.0], 3.0, b)


@given(st.integers(0, 2**32 - 1))
def test_interpolation_random(hp_model, seed):
    b = quadratic_growth_constant(eigenfunction_sup(hp_model, 256, 20))
    c = np.random.default_rng(seed).standard_normal(20) * np.arange(1, 21.0) ** -5
    assert interpolation_check(hp_model, c, 4.0, b, 256).passed


def test_hp_matches_double(hp_model, model64):
    assert hp_model.eigenvalues[:8] == pytest.approx(model64.eigenvalues[:8], rel=1e-6)
    xs = np.linspace(0, 1, 7)
    assert eigenfunction_values(hp_model, xs, [1, 2, 3]) == pytest.approx(
        eigenfunction_values(model64, xs, [1, 2, 3]), abs=1e-8)


def test_hp_extension_against_interpolation(hp_model):
    # independent oracle: barycentric interpolation through the node values
    from scipy.interpolate import BarycentricInterpolator
    g = hp_model.grid
    ell = 15
    interp = BarycentricInterpolator(g.axis_nodes, hp_model.node_values[:, ell - 1])
    xs = np.linspace(0.05, 0.95, 11)
    assert eigenfunction_values(hp_model, xs, [ell])[:, 0] == pytest.approx(interp(xs), abs=1e-7)


def test_serialization_roundtrip(tmp_path, model64, hp_model):
    for m in (model64, hp_model):
        path = tmp_path / "m.json"
        save_model(m, path)
        back = load_model(path)
        assert np.array_equal(back.eigenvalues, m.eigenvalues)
        assert np.array_equal(back.node_values, m.node_values)
        assert json.loads(path.read_text())["version"]
    doc = model_to_dict(model64)
    doc["version"] = "other"
    with pytest.raises(ShapeError):
        model_from_dict(doc)
