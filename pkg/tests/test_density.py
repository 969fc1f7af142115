import numpy as np
import pytest
from hypothesis import example, given, strategies as st
from scipy import integrate

from kml.errors import DensityError, DomainError
from kml.density import PerturbedDensity, UniformDensity, density_from_dict


def test_uniform_bounds():
    u = UniformDensity(3)
    assert (u.p_min, u.p_max, u.c_p) == (1.0, 1.0, 1.0)
    assert u.is_uniform
    assert np.all(u.pdf(np.random.default_rng(0).random((5, 3))) == 1.0)


@pytest.mark.parametrize("beta", [0.0, 0.3, 0.9])
def test_perturbed_integrates_to_one(beta):
    p = PerturbedDensity(2, beta)
    total = integrate.dblquad(lambda y, x: p.pdf([[x, y]])[0], 0, 1, 0, 1)[0]
    assert total == pytest.approx(1.0, abs=1e-10)
    assert p.p_min == pytest.approx((1 - beta) ** 2)
    assert p.c_p == pytest.approx(1 / (1 - beta) ** 2)


def test_perturbed_sampler_matches_cdf():
    p = PerturbedDensity(1, 0.6)
    z = p.sample(np.random.default_rng(1), 200_000)[:, 0]
    for t in (0.2, 0.5, 0.8):
        exact = 0.4 * t + 0.6 * t * t
        assert np.mean(z <= t) == pytest.approx(exact, abs=4e-3)


@given(st.floats(0.0, 0.99), st.integers(1, 3))
@example(1.1e-15, 1)
def test_pdf_within_bounds(beta, d):
    p = PerturbedDensity(d, beta)
    z = p.sample(np.random.default_rng(2), 256)
    vals = p.pdf(z)
    assert np.all((z >= 0) & (z <= 1))
    assert np.all(vals >= p.p_min * (1 - 1e-12)) and np.all(vals <= p.p_max * (1 + 1e-12))


def test_from_dict_variants():
    assert isinstance(density_from_dict(None, 2), UniformDensity)
    assert density_from_dict({"kind": "perturbed", "beta": 0.25}, 1).beta == 0.25
    assert density_from_dict({"kind": "perturbed", "p_min": 0.25}, 2).beta == pytest.approx(0.5)
    assert density_from_dict({"kind": "perturbed", "p_max": 2.25}, 2).beta == pytest.approx(0.5)
    assert density_from_dict({"kind": "perturbed", "p_min": 0.25, "p_max": 2.25}, 2).beta == pytest.approx(0.5)


def test_from_dict_errors():
    with pytest.raises(DensityError):
        density_from_dict({"kind": "perturbed", "p_min": 0.25, "p_max": 3.0}, 2)
    with pytest.raises(DensityError):
        density_from_dict({"kind": "beta"}, 1)
    with pytest.raises(DensityError):
        PerturbedDensity(1, 1.0)
    with pytest.raises(DomainError):
        UniformDensity(0)
