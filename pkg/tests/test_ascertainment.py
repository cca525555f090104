import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import random_params
from penetrance import genetics
from penetrance.ascertainment import (AscertainmentRule, ascertainment_probability, corrected_family_log_likelihood,
                                      log_ascertainment_probability)
from penetrance.baseline import BaselineFamily, BernsteinBaseline
from penetrance.errors import DataError, NumericalError
from penetrance.pedigree import load_pedigrees
from penetrance.peeling import family_log_likelihood
from penetrance.riskmodel import (CauseParams, CauseSpec, ModelParams, ModelSpec, cause_hazard, lfs_spec,
                                  overall_survival)

seeds = st.integers(0, 2**32 - 1)
HEADER = "family_id\tindividual_id\tfather_id\tmother_id\tsex\tgenotype\tage\tcause\tproband\n"


def constant_single_cause(c, beta=(0.0,)):
    spec = ModelSpec((CauseSpec(1, "c", ("G",)),), BaselineFamily("bernstein", 1))
    return ModelParams(spec, (CauseParams(np.array(beta), BernsteinBaseline((c,)), 1.0),))


@pytest.mark.parametrize("c,y", [(0.3, 0.5), (2.0, 0.9), (0.05, 1.0)])
def test_constant_hazard_closed_form(c, y):
    m = constant_single_cause(c)
    for phi in (0.001, 0.3):
        got = ascertainment_probability(m, [1.0], 0, y, AscertainmentRule(1), phi)
        assert got == pytest.approx(c * math.exp(-c * y), rel=1e-14)


def test_structural_zero_is_degenerate():
    spec = lfs_spec(2)
    m = ModelParams.from_arrays(spec, [[1.0], [0, 0, 0], [0, 0, 0]], [[1, 1]] * 3, [1, 1, 1])
    with pytest.raises(NumericalError, match="zero"):
        ascertainment_probability(m, np.ones(3), 1, 0.5, AscertainmentRule(1), 0.01)


def test_vanishing_allele_frequency():
    m = random_params(np.random.default_rng(4))
    xi = np.array([0.8, 1.7])
    ref = float(cause_hazard(m, 2, 0, 1, xi[1], 0.4)) * float(
        np.exp(-sum(m.causes[k].baseline.cumulative(0.4) * xi[k] * math.exp(m.causes[k].beta[1]) for k in (0, 1))))
    got = ascertainment_probability(m, xi, 1, 0.4, AscertainmentRule(2), 1e-15)
    assert got == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("time", [0.0, 1.2])
def test_time_domain(time):
    with pytest.raises(ValueError):
        ascertainment_probability(constant_single_cause(1.0), [1.0], 0, time, AscertainmentRule(1), 0.1)


def test_rule_validation():
    with pytest.raises(ValueError):
        AscertainmentRule(0)
    with pytest.raises(ValueError):
        ascertainment_probability(constant_single_cause(1.0), [1.0], 0, 0.5, AscertainmentRule(2), 0.1)


def test_disabled_rule_is_uncorrected():
    (p,) = load_pedigrees(io.StringIO(HEADER + "F\ta\t\t\tF\tNA\t0.4\t2\t1\nF\tb\t\t\tM\tNA\t0.5\t1\t0\n"
                                      "F\tc\tb\ta\tF\t1\t0.2\t0\t0\n"))
    m = random_params(np.random.default_rng(0))
    xi = np.array([1.1, 0.9])
    assert log_ascertainment_probability(m, xi, 0, 0.4, AscertainmentRule(None), 0.1) == 0.0
    assert corrected_family_log_likelihood(p, m, xi, AscertainmentRule(None), 0.1) == family_log_likelihood(p, m, xi, 0.1)


def test_singleton_proband():
    (p,) = load_pedigrees(io.StringIO(HEADER + "F\ta\t\t\tM\tNA\t0.7\t2\t1\n"))
    m = random_params(np.random.default_rng(8))
    xi = np.array([0.6, 1.3])
    phi = 0.05
    w = genetics.collapse(genetics.founder_prior(phi))
    lik = [math.exp(sum(-float(m.causes[k].baseline.cumulative(0.7)) * xi[k] * math.exp(m.causes[k].beta @ [g, 1, g])
                        for k in (0, 1))) * float(cause_hazard(m, 2, g, 1, xi[1], 0.7)) for g in (0, 1)]
    # the proband's likelihood and the ascertainment weight coincide for a singleton
    num = w @ lik
    assert corrected_family_log_likelihood(p, m, xi, AscertainmentRule(2), phi) == pytest.approx(0.0, abs=1e-12)
    assert ascertainment_probability(m, xi, 1, 0.7, AscertainmentRule(2), phi) == pytest.approx(num, rel=1e-12)


def test_proband_failing_rule():
    (p,) = load_pedigrees(io.StringIO(HEADER + "F\ta\t\t\tM\tNA\t0.7\t1\t1\n"))
    m = random_params(np.random.default_rng(8))
    with pytest.raises(DataError, match="ascertainment"):
        corrected_family_log_likelihood(p, m, np.ones(2), AscertainmentRule(2), 0.05)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_mixture_of_subdensities(seed):
    rng = np.random.default_rng(seed)
    m = random_params(rng, K=int(rng.integers(2, 4)))
    xi = rng.gamma(2, 0.5, m.K)
    x, y, phi = int(rng.integers(2)), rng.uniform(0.01, 1), rng.uniform(1e-4, 0.5)
    kstar = int(rng.integers(1, m.K + 1))
    w = genetics.collapse(genetics.founder_prior(phi))
    # conditional survival as the product of frailty-given-xi survivals
    from penetrance.riskmodel import conditional_cumulative_hazard
    f = [float(cause_hazard(m, kstar, g, x, xi[kstar - 1], y))
         * math.exp(-sum(float(conditional_cumulative_hazard(m, k, g, x, xi[k - 1], y)) for k in range(1, m.K + 1)))
         for g in (0, 1)]
    got = ascertainment_probability(m, xi, x, y, AscertainmentRule(kstar), phi)
    assert got == pytest.approx(w @ f, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_probability_bounds(seed):
    # the weight is a density: it is a probability only while hazards stay below one
    rng = np.random.default_rng(seed)
    spec = ModelSpec((CauseSpec(1, "a", ("G",)), CauseSpec(2, "b", ("G",))), BaselineFamily("bernstein", 3))
    m = ModelParams.from_arrays(spec, [[rng.normal(0, 0.3)], [rng.normal(0, 0.3)]],
                                [rng.uniform(0.01, 0.2, 3), rng.uniform(0.01, 0.2, 3)], [1, 1])
    xi = rng.uniform(0.2, 1.5, 2)
    p = ascertainment_probability(m, xi, 0, rng.uniform(0.05, 1), AscertainmentRule(2), rng.uniform(1e-4, 0.5))
    assert 0 < p < 1


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(1.01, 3.0))
def test_inflating_rule_hazard_penalises(seed, factor):
    rng = np.random.default_rng(seed)
    spec = ModelSpec((CauseSpec(1, "a", ("G",)), CauseSpec(2, "b", ("G",))), BaselineFamily("bernstein", 2))
    g1, g2 = rng.uniform(0.01, 0.15, 2), rng.uniform(0.01, 0.15, 2)
    beta = [[rng.normal(0, 0.5)], [rng.normal(0, 0.5)]]
    lo = ModelParams.from_arrays(spec, beta, [g1, g2], [1, 1])
    hi = ModelParams.from_arrays(spec, beta, [g1, g2 * factor], [1, 1])
    y = rng.uniform(0.05, 1)
    # while the cumulative rule hazard stays below one, lambda * exp(-Lambda) grows with the scale
    assert ascertainment_probability(hi, [1, 1], 0, y, AscertainmentRule(2), 0.1) > \
        ascertainment_probability(lo, [1, 1], 0, y, AscertainmentRule(2), 0.1)
    (p,) = load_pedigrees(io.StringIO(HEADER + f"F\ta\t\t\tF\tNA\t{y}\t2\t1\nF\tb\t\t\tM\tNA\t0.9\t0\t0\n"
                                      f"F\tc\tb\ta\tM\tNA\t0.3\t0\t0\n"))
    rule = AscertainmentRule(2)
    gaps = [family_log_likelihood(p, m, [1, 1], 0.1) - corrected_family_log_likelihood(p, m, [1, 1], rule, 0.1)
            for m in (lo, hi)]
    assert gaps[1] > gaps[0]
