import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosbath.params import (
    ConfigurationError,
    PerturbationSpec,
    RaisedCosineLaw,
    perturbed_param,
)
from chaosbath.rng import stream

LAW = RaisedCosineLaw()


def quad_average(g, law=LAW, epsilon=0.0, n=30001):
    """Independent trapezoid oracle for integrals against the shifted law."""
    lo, hi = law.support
    x = np.linspace(lo + epsilon, hi + epsilon, n)
    return np.trapezoid(g(x) * law.pdf(x - epsilon), x)


def test_pdf_peak_is_two_over_width():
    assert LAW.pdf(3.85) == pytest.approx(20.0)


def test_pdf_vanishes_at_support_edges_and_outside():
    assert LAW.pdf(3.8) == pytest.approx(0.0, abs=1e-14)
    assert LAW.pdf(3.9) == pytest.approx(0.0, abs=1e-14)
    assert LAW.pdf(3.75) == 0.0
    assert LAW.pdf(3.95) == 0.0


def test_pdf_normalization_by_trapezoid():
    x = np.linspace(3.8, 3.9, 30001)
    total = np.trapezoid(LAW.pdf(x), x)
    assert total == pytest.approx(1.0, abs=1e-8)


@given(st.floats(min_value=3.0, max_value=4.5, allow_nan=False))
@settings(max_examples=200, deadline=None)
def test_pdf_nonnegative_and_cdf_bounded(x):
    assert LAW.pdf(x) >= 0.0
    assert 0.0 <= LAW.cdf(x) <= 1.0


@given(st.floats(min_value=3.7, max_value=4.0), st.floats(min_value=0.0, max_value=0.2))
@settings(max_examples=100, deadline=None)
def test_cdf_monotone(x, dx):
    assert LAW.cdf(x + dx) >= LAW.cdf(x) - 1e-12


def test_sampling_mean_and_variance():
    rng = stream(2024, 0)
    draws = LAW.sample(rng, 1_000_000)
    assert draws.min() >= 3.8 and draws.max() <= 3.9
    # symmetric law: mean at the center within 3 standard errors
    se_mean = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - 3.85) < 3 * se_mean
    # variance against the quadrature oracle
    var_oracle = quad_average(lambda x: (x - 3.85) ** 2)
    assert var_oracle == pytest.approx(0.05 ** 2 * (1.0 / 3.0 - 2.0 / np.pi ** 2), rel=1e-6)
    se_var = np.sqrt(2.0 / draws.size) * var_oracle
    assert abs(draws.var() - var_oracle) < 4 * se_var


def test_sample_scalar_mode():
    rng = stream(5, 0)
    x = LAW.sample(rng)
    assert isinstance(x, float)
    assert 3.8 <= x <= 3.9


def test_perturbed_param_identity_and_shift():
    assert perturbed_param(3.85, PerturbationSpec(epsilon=0.0)) == pytest.approx(3.85)
    assert perturbed_param(3.85, PerturbationSpec(epsilon=0.02)) == pytest.approx(3.87)


def test_perturbed_param_range_error():
    with pytest.raises(ConfigurationError):
        perturbed_param(3.95, PerturbationSpec(epsilon=0.2))
    with pytest.raises(ConfigurationError):
        perturbed_param(3.75, PerturbationSpec(epsilon=-0.2))


def test_perturbed_support_translates():
    eps = 0.03
    draws = LAW.sample(stream(7, 1), 10_000)
    shifted = perturbed_param(draws, PerturbationSpec(epsilon=eps))
    assert shifted.min() >= 3.8 + eps - 1e-12
    assert shifted.max() <= 3.9 + eps + 1e-12


def test_translation_property_of_averages():
    # quadrature of g against the shifted law equals the Monte Carlo
    # average of g(a0 + eps) within Monte Carlo error
    g = lambda x: np.sin(8.0 * x)
    eps = 0.04
    oracle = quad_average(g, epsilon=eps)
    draws = LAW.sample(stream(11, 0), 400_000)
    vals = g(draws + eps)
    se = vals.std() / np.sqrt(vals.size)
    assert abs(vals.mean() - oracle) < 4 * se


def test_smoothness_third_divided_differences_stable():
    # the map eps -> <g>_eps must have bounded third differences down to
    # h = 1e-3 for smooth g (the law is three times weakly differentiable)
    g = lambda x: np.sin(10.0 * x)
    ratios = []
    for h in (1e-2, 3e-3, 1e-3):
        eps0 = 0.03
        vals = [quad_average(g, epsilon=eps0 + k * h) for k in range(4)]
        d3 = (vals[3] - 3 * vals[2] + 3 * vals[1] - vals[0]) / h ** 3
        ratios.append(d3)
    ratios = np.asarray(ratios)
    # all estimates agree with each other within a factor ~2: no blow-up
    assert np.abs(ratios).max() < 2.5 * np.abs(ratios).min() + 1e-6


def test_smoothness_order_is_three():
    assert LAW.smoothness().ell == 3
