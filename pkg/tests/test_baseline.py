import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from penetrance.baseline import (BaselineFamily, BernsteinBaseline, ExponentialBaseline, PiecewiseConstantBaseline,
                                 WeibullBaseline, baseline_hazard, bernstein_basis, cumulative_baseline)

coeffs = st.lists(st.floats(0, 5), min_size=1, max_size=8)


def test_degree_one_is_linear():
    b = BernsteinBaseline((0.7,))
    assert cumulative_baseline(b, 0.5) == pytest.approx(0.35, abs=1e-15)
    np.testing.assert_allclose(baseline_hazard(b, np.linspace(0, 1, 7)), 0.7, rtol=1e-15)


def test_degree_two_closed_form():
    # B_2(t, 1) = 1 - (1 - t)^2 and B_2(t, 2) = t^2
    b = BernsteinBaseline((0.5, 0.5))
    assert cumulative_baseline(b, 0.5) == pytest.approx(0.5 * 0.75 + 0.5 * 0.25, abs=1e-15)
    assert cumulative_baseline(b, 0.5) == pytest.approx(0.5, abs=1e-15)


def test_zero_coefficients():
    b = BernsteinBaseline((0.0, 0.0, 0.0))
    np.testing.assert_array_equal(baseline_hazard(b, np.linspace(0, 1, 11)), 0.0)


def test_derivative_against_finite_difference():
    b = BernsteinBaseline((0.2, 0.3, 0.1))
    h = 1e-5
    fd = (cumulative_baseline(b, 0.4 + h) - cumulative_baseline(b, 0.4 - h)) / (2 * h)
    assert baseline_hazard(b, 0.4) == pytest.approx(fd, abs=1e-6)


def test_basis_matches_binomial_tail():
    # Beta(m, M-m+1) cdf at t equals Pr(Binomial(M, t) >= m)
    t = np.linspace(0, 1, 41)
    for M in (1, 2, 5, 9):
        B, _ = bernstein_basis(t, M)
        for m in range(1, M + 1):
            np.testing.assert_allclose(B[:, m - 1], binom.sf(m - 1, M, t), rtol=1e-12, atol=1e-15)


@given(coeffs)
def test_endpoints(c):
    b = BernsteinBaseline(tuple(c))
    assert cumulative_baseline(b, 0.0) == 0.0
    assert cumulative_baseline(b, 1.0) == pytest.approx(sum(c), rel=1e-14, abs=1e-300)


@settings(max_examples=200)
@given(coeffs, st.floats(0.001, 0.999))
def test_hazard_is_derivative(c, t):
    b = BernsteinBaseline(tuple(c))
    h = 1e-5
    t = min(max(t, h), 1 - h)
    fd = (cumulative_baseline(b, t + h) - cumulative_baseline(b, t - h)) / (2 * h)
    assert baseline_hazard(b, t) == pytest.approx(fd, abs=1e-6 * max(1.0, sum(c)))


@given(coeffs, st.floats(0, 1), st.floats(0, 1))
def test_monotone(c, t1, t2):
    b = BernsteinBaseline(tuple(c))
    lo, hi = sorted((t1, t2))
    assert cumulative_baseline(b, lo) <= cumulative_baseline(b, hi)


def test_weights_are_cumulative_values():
    b = BernsteinBaseline((0.2, 0.3, 0.1))
    np.testing.assert_allclose(b.weights, [0.2, 0.5, 0.6])


@pytest.mark.parametrize("bad", [(-0.1, 1.0), (np.nan,), ()])
def test_invalid_coefficients(bad):
    with pytest.raises(ValueError):
        BernsteinBaseline(bad)


@pytest.mark.parametrize("t", [-0.01, 1.01, np.nan])
def test_time_domain(t):
    with pytest.raises(ValueError):
        cumulative_baseline(BernsteinBaseline((1.0,)), t)


@pytest.mark.parametrize("b", [ExponentialBaseline(0.3), WeibullBaseline(0.5, 1.7), PiecewiseConstantBaseline((0.1, 0.4, 0.2, 0.3, 0.05))])
def test_alternative_baselines_derivative(b):
    h = 1e-6
    for t in (0.13, 0.33, 0.51, 0.77):
        fd = (b.cumulative(t + h) - b.cumulative(t - h)) / (2 * h)
        assert b.hazard(t) == pytest.approx(fd, rel=1e-6)
    assert b.cumulative(0.0) == 0.0


@pytest.mark.parametrize("kind,size", [("bernstein", 4), ("exponential", 1), ("weibull", 1), ("piecewise", 5)])
def test_family_evaluate_matches_objects(kind, size):
    fam = BaselineFamily(kind, size)
    rng = np.random.default_rng(1)
    params = rng.uniform(0.2, 2.0, fam.n_params)
    t = np.linspace(0.01, 1, 13)
    cum, haz = fam.evaluate(fam.precompute(t), params)
    obj = fam.build(params)
    np.testing.assert_allclose(cum, obj.cumulative(t), rtol=1e-13)
    np.testing.assert_allclose(haz, obj.hazard(t), rtol=1e-13)
    assert len(fam.param_names()) == fam.n_params


def test_initial_params_constant_rate():
    for kind in ("bernstein", "exponential", "piecewise"):
        fam = BaselineFamily(kind, 5)
        b = fam.build(fam.initial_params(0.8))
        np.testing.assert_allclose(b.cumulative(np.array([0.25, 0.5, 1.0])), [0.2, 0.4, 0.8], rtol=1e-12)
