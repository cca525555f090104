import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import brute_force_carrier, mendel_consistent, model_person_loglik, random_params, random_pedigree
from penetrance import genetics
from penetrance.inference import PosteriorSamples
from penetrance.pedigree import load_pedigrees
from penetrance.predict import carrier_probability, family_carrier_probabilities, mixture_risk, predict_risk
from penetrance.riskmodel import cause_penetrance, simulation_spec

HEADER = "family_id\tindividual_id\tfather_id\tmother_id\tsex\tgenotype\tage\tcause\tproband\n"
FAMILY = HEADER + ("F\tf\t\t\tM\tNA\t0.7\t0\t0\n"
                   "F\tm\t\t\tF\tNA\t{mother}\t0\n"
                   "F\tc\tf\tm\tF\t{geno}\t0.4\t0\t1\n")


def family(mother="0.6\t0", geno="NA"):
    (p,) = load_pedigrees(io.StringIO(FAMILY.format(mother=mother, geno=geno)))
    return p


def fake_samples(n=5, seed=0, time_scale=1.0, fids=("F",)):
    rng = np.random.default_rng(seed)
    spec = simulation_spec(3)
    return PosteriorSamples(spec, time_scale, list(fids), [rng.uniform(1, 3, (n, 1)) for _ in range(2)],
                            [rng.uniform(0.1, 0.6, (n, 3)) for _ in range(2)], rng.uniform(0.5, 3, (n, 2)),
                            rng.normal(0, 0.3, (n, len(fids), 2)), np.zeros(n))


def test_observed_carrier():
    p = family(geno="1")
    m = fake_samples().params(0)
    np.testing.assert_array_equal(carrier_probability(p, "c", m, np.ones(2), 0.01), [0.0, 1.0])


def test_uninformative_singleton():
    (p,) = load_pedigrees(io.StringIO(HEADER + "F\ta\t\t\tF\tNA\t0\t0\t1\n"))
    m = fake_samples().params(0)
    phi = 0.03
    got = carrier_probability(p, "a", m, np.ones(2), phi)
    assert got[1] == pytest.approx(1 - (1 - phi) ** 2, rel=1e-14)


def test_unknown_member():
    with pytest.raises(KeyError):
        carrier_probability(family(), "zz", fake_samples().params(0), np.ones(2), 0.01)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_family_probabilities_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    p = mendel_consistent(random_pedigree(rng, max_members=8))
    m = random_params(rng)
    xi = rng.gamma(2, 0.5, 2)
    ref = brute_force_carrier(p, model_person_loglik(m, xi), 0.08)
    got = family_carrier_probabilities(p, m, xi, 0.08)
    np.testing.assert_allclose(got[:, 1], [ref[i] for i in p.ids], atol=1e-10)
    np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-14)


def test_affected_relative_raises_carrier_probability():
    s = fake_samples()
    m = s.params(0)
    healthy = carrier_probability(family(mother="0.6\t0"), "c", m, np.ones(2), 0.01)[1]
    affected = carrier_probability(family(mother="0.2\t2"), "c", m, np.ones(2), 0.01)[1]
    assert affected > healthy


def test_degenerate_weights_give_carrier_curve():
    s = fake_samples()
    ages = np.linspace(0, 1, 6)
    pred = predict_risk(family(geno="1"), "c", 2, ages, s, 0.01, frailty_mode="fixed")
    for r, draw in enumerate(range(s.n_draws)):
        np.testing.assert_array_equal(pred.draws[r], cause_penetrance(s.params(draw), 2, 1, 0, ages))
    assert pred.carrier_probability == 1.0
    assert pred.mean[0] == 0.0 and pred.lower[0] == 0.0 and pred.upper[0] == 0.0


@pytest.mark.parametrize("mode", ["gamma", "fixed", "fitted"])
def test_convex_bound_and_affine_weights(mode):
    s = fake_samples(n=4, seed=2)
    ages = np.linspace(0, 1, 5)
    p = family(mother="0.3\t2")
    pred = predict_risk(p, "c", 2, ages, s, 0.01, frailty_mode=mode, seed=3)
    for r in range(s.n_draws):
        m = s.params(r)
        q0, q1 = cause_penetrance(m, 2, 0, 0, ages), cause_penetrance(m, 2, 1, 0, ages)
        assert np.all(pred.draws[r] >= np.minimum(q0, q1) - 1e-15)
        assert np.all(pred.draws[r] <= np.maximum(q0, q1) + 1e-15)
        # recover the weight and check the curve is exactly the mixture
        w1 = (pred.draws[r][-1] - q0[-1]) / (q1[-1] - q0[-1])
        np.testing.assert_allclose(pred.draws[r], mixture_risk(np.array([1 - w1, w1]), q0, q1), atol=1e-12)
    assert 0 <= pred.carrier_lower <= pred.carrier_probability <= pred.carrier_upper <= 1


def test_fitted_mode_uses_family_frailty():
    s = fake_samples(n=3)
    p = family(mother="0.3\t2")
    xi = np.exp(s.log_xi[1, 0])
    w = carrier_probability(p, "c", s.params(1), xi, 0.01)
    pred = predict_risk(p, "c", 2, [0.5], s, 0.01, frailty_mode="fitted")
    m = s.params(1)
    ref = w[0] * cause_penetrance(m, 2, 0, 0, 0.5) + w[1] * cause_penetrance(m, 2, 1, 0, 0.5)
    assert pred.draws[1, 0] == pytest.approx(ref, rel=1e-13)


def test_prediction_errors():
    s = fake_samples(fids=("G",))
    with pytest.raises(ValueError):
        predict_risk(family(), "c", 2, [2.0], s, 0.01)
    with pytest.raises(ValueError):
        predict_risk(family(), "c", 2, [0.5], s, 0.01, frailty_mode="other")
    with pytest.raises(KeyError):
        predict_risk(family(), "c", 2, [0.5], s, 0.01, frailty_mode="fitted")
    with pytest.raises(ValueError):
        predict_risk(family(), "c", 3, [0.5], s, 0.01)


def test_mixture_is_affine():
    q0, q1 = np.array([0.1, 0.2]), np.array([0.5, 0.9])
    for w in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(mixture_risk([1 - w, w], q0, q1), q0 + w * (q1 - q0), rtol=1e-15)
