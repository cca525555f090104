"""Proband ascertainment correction.

A family enters the study when its proband is diagnosed with the qualifying
cause. Each family's likelihood is divided by the probability of that event,
evaluated at the proband's observed diagnosis age with the proband's
genotype summed over the population prior.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .peeling import _as_prior, family_log_likelihood
from .pedigree import Pedigree
from .riskmodel import ModelParams, conditional_cumulative_hazard, log_cause_hazard

__all__ = ["AscertainmentRule", "ascertainment_probability", "log_ascertainment_probability",
           "corrected_family_log_likelihood"]


@dataclass(frozen=True)
class AscertainmentRule:
    """Families are sampled through a proband with event ``cause``.

    ``cause=None`` disables the correction (every family counts as
    ascertained with probability one).
    """

    cause: int | None = 2

    def __post_init__(self):
        if self.cause is not None and (not isinstance(self.cause, (int, np.integer)) or self.cause < 1):
            raise ValueError(f"ascertainment cause must be a positive integer, got {self.cause!r}")

    def validate_for(self, n_causes: int) -> None:
        if self.cause is not None and self.cause > n_causes:
            raise ValueError(f"ascertainment cause {self.cause} exceeds the {n_causes} model causes")


def log_ascertainment_probability(m: ModelParams, xi, proband_x: int, proband_time: float,
                                  rule: AscertainmentRule, prior) -> float:
    """Log of :func:`ascertainment_probability`."""
    if rule.cause is None:
        return 0.0
    rule.validate_for(m.K)
    t = float(proband_time)
    if not 0.0 < t <= 1.0:
        raise ValueError(f"proband time must lie in (0, 1] on the rescaled axis, got {t}")
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (m.K,))
    probs = _as_prior(prior)
    carrier_w = np.array([probs[0], probs[1] + probs[2]])
    terms = np.full(2, -np.inf)
    for g in (0, 1):
        log_lam = float(log_cause_hazard(m, rule.cause, g, proband_x, xi[rule.cause - 1], t))
        if not log_lam > -np.inf or carrier_w[g] <= 0.0:
            continue
        cum = sum(float(conditional_cumulative_hazard(m, k, g, proband_x, xi[k - 1], t))
                  for k in range(1, m.K + 1))
        terms[g] = np.log(carrier_w[g]) + log_lam - cum
    mx = terms.max()
    if not np.isfinite(mx):
        raise NumericalError(
            f"ascertainment probability is zero for cause {rule.cause} at rescaled age {t:.4g} "
            f"(sex={'M' if proband_x else 'F'}, xi={xi.tolist()})")
    return float(mx + np.log(np.sum(np.exp(terms - mx))))


def ascertainment_probability(m: ModelParams, xi, proband_x: int, proband_time: float,
                              rule: AscertainmentRule, prior) -> float:
    """Probability weight of the proband's qualifying diagnosis.

    Sums, over carrier status ``g`` with population weights, the cause
    hazard times overall conditional survival at the proband's age.

    Parameters
    ----------
    m : ModelParams
    xi : array_like
        Family frailties, one per cause.
    proband_x : int
        Proband sex (1 = male).
    proband_time : float
        Proband age on the rescaled axis, in ``(0, 1]``.
    rule : AscertainmentRule
    prior : float or array_like
        Allele frequency or founder genotype distribution.
    """
    return float(np.exp(log_ascertainment_probability(m, xi, proband_x, proband_time, rule, prior)))


def corrected_family_log_likelihood(p: Pedigree, m: ModelParams, xi, rule: AscertainmentRule, prior,
                                    pivot: str | None = None) -> float:
    """Family log-likelihood minus the log ascertainment probability."""
    ll = family_log_likelihood(p, m, xi, prior, pivot=pivot)
    if rule.cause is None:
        return ll
    pb = p.proband
    if pb.phenotype.cause != rule.cause:
        raise DataError(f"family {p.family_id}: proband {pb.id} has event code {pb.phenotype.cause}, "
                        f"ascertainment requires {rule.cause}")
    return ll - log_ascertainment_probability(m, xi, pb.male, float(m.rescale(pb.phenotype.time)), rule, prior)
