import math

import numpy as np
import pytest

from penetrance.errors import ConfigError, NumericalError
from penetrance.pedigree import dumps, validate
from penetrance.simulate import (TEMPLATE, SimulationConfig, candidate_prevalence, event_time_sample,
                                 simulate_cohort)


def test_exponential_mean():
    rng = np.random.default_rng(0)
    r = 2.5
    t, d = event_time_sample(np.zeros(10**5), [0.0], [r], np.ones(1), 1e-300, rng)
    assert np.all(d == 1)
    se = (1 / r) / math.sqrt(t.size)
    assert abs(t.mean() - 1 / r) < 3 * se


def test_competing_exponentials():
    rng = np.random.default_rng(1)
    n = 10**5
    r1, r2 = 0.7, 1.9
    _, d = event_time_sample(np.ones(n), [math.log(2), 0.0], [r1 / 2, r2], np.ones(2), 1e-300, rng)
    p = r1 / (r1 + r2)
    assert abs((d == 1).mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_censoring_limit():
    t, d = event_time_sample(np.ones(1000), [1.0], [0.5], np.ones(1), np.inf, np.random.default_rng(2))
    assert np.all(d == 0) and np.all(t == 0.0)
    t, d = event_time_sample(np.ones(1000), [1.0], [0.5], np.ones(1), 1e12, np.random.default_rng(2))
    assert np.all(d == 0) and t.max() < 1e-9


def test_family_level_frailty_rows():
    rng = np.random.default_rng(3)
    xi = np.array([[1.0, 1.0], [1e-12, 1e-12]])
    t, d = event_time_sample(np.zeros(2), [0.0, 0.0], [1.0, 1.0], xi, 1e-300, rng)
    assert t[1] > t[0] * 1e6


@pytest.fixture(scope="module")
def cohort():
    return simulate_cohort(SimulationConfig(family_count=40, seed=17))


def test_cohort_structure(cohort):
    n = len(TEMPLATE)
    for p in cohort:
        assert validate(p) == []
        assert len(p) == n
        assert p.proband.id == "1" and p.proband.phenotype.cause == 2
        assert p.proband.genotype is not None
        missing = sum(ind.genotype is None for ind in p.members)
        assert missing == (n - 1) // 2
        for ind in p.members:
            assert ind.phenotype.time >= 0 and ind.phenotype.cause in (0, 1, 2)
            if ind.genotype == 1 and not ind.is_founder:
                fa, mo = p[ind.father].genotype, p[ind.mother].genotype
                assert not (fa == 0 and mo == 0)


def test_reproducible(cohort):
    again = simulate_cohort(SimulationConfig(family_count=40, seed=17))
    assert dumps(again) == dumps(cohort)
    assert dumps(simulate_cohort(SimulationConfig(family_count=40, seed=18))) != dumps(cohort)


def test_family_seeds_are_order_free():
    a = simulate_cohort(SimulationConfig(family_count=5, seed=4))
    b = simulate_cohort(SimulationConfig(family_count=3, seed=4))
    assert dumps(a[:3]) == dumps(b)


def test_zero_frequency_means_no_carriers():
    cohort = simulate_cohort(SimulationConfig(family_count=3, seed=5, proband_carrier_frequency=0.0))
    assert all(ind.genotype in (0, None) for p in cohort for ind in p.members)
    assert all(p.proband.genotype == 0 for p in cohort)


def test_all_carrier_probands_with_huge_effect():
    cohort = simulate_cohort(SimulationConfig(family_count=3, seed=6, proband_carrier_frequency=1.0,
                                              betas=(0.0, 30.0)))
    assert all(p.proband.genotype == 1 for p in cohort)


def test_impossible_ascertainment_guard():
    cfg = SimulationConfig(family_count=1, seed=0, baseline_rates=(1.0, 1e-12), betas=(0.0, 0.0),
                           max_attempts=20_000, batch_size=5000)
    with pytest.raises(NumericalError, match="no qualifying proband"):
        simulate_cohort(cfg)


def test_config_validation():
    for kw in ({"family_count": 0}, {"betas": (1.0,)}, {"baseline_rates": (0.1, -1.0)},
               {"missing_fraction": 1.5}, {"ascertainment_cause": 3}, {"censoring_rate": 0}):
        with pytest.raises(ConfigError):
            SimulationConfig(**kw)


def test_candidate_prevalence_shape():
    prev = candidate_prevalence(SimulationConfig(seed=1), n=20_000)
    assert prev.shape == (2,) and 0 < prev[0] < 0.2 and prev[1] < 0.01
