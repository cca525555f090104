"""Carrier probabilities and personalised cause-specific risk.

A member's risk of cause ``k`` by age ``t`` averages the two carrier-status
penetrance curves with the member's posterior carrier probability, given the
family history and observed genotypes. Posterior uncertainty is propagated
by repeating the calculation for each retained draw.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import genetics
from .inference import PosteriorSamples
from .pedigree import Pedigree
from .peeling import compute_messages
from .riskmodel import ModelParams, cause_penetrance

__all__ = ["FRAILTY_MODES", "carrier_probability", "family_carrier_probabilities", "RiskPrediction",
           "predict_risk", "mixture_risk"]

FRAILTY_MODES = ("gamma", "fixed", "fitted")


def _collapsed(p: Pedigree, msgs, j: int, own_phenotype: bool) -> np.ndarray:
    g = p.members[j].genotype
    if g is not None:
        # an observed genotype is certain; skip the rounding of the normalised sum
        return np.array([1.0 - g, float(g)])
    return genetics.collapse(msgs.state_posterior(j, own_phenotype))


def carrier_probability(p: Pedigree, member: str, m: ModelParams, xi, prior, own_phenotype: bool = True) -> np.ndarray:
    """Posterior ``(Pr(G = 0), Pr(G = 1))`` of one member's carrier status.

    Parameters
    ----------
    p : Pedigree
    member : str
        Member id.
    m : ModelParams or None
        ``None`` ignores all phenotypes (genotype information only).
    xi : array_like
        Family frailty per cause.
    prior : float or array_like
        Allele frequency or founder genotype distribution.
    own_phenotype : bool
        Include the member's own outcome in the family history.
    """
    if member not in p:
        raise KeyError(f"member {member!r} not in family {p.family_id}")
    msgs = compute_messages(p, m, xi, prior)
    return _collapsed(p, msgs, p.index[member], own_phenotype)


def family_carrier_probabilities(p: Pedigree, m: ModelParams, xi, prior, own_phenotype: bool = True) -> np.ndarray:
    """Carrier probability of every member, shape ``(len(p), 2)``, from one peeling."""
    msgs = compute_messages(p, m, xi, prior)
    return np.array([_collapsed(p, msgs, j, own_phenotype) for j in range(len(p))])


def mixture_risk(weights, q0, q1):
    """``w0 * q0 + w1 * q1`` with weights over (non-carrier, carrier)."""
    weights = np.asarray(weights, dtype=float)
    return weights[..., 0:1] * np.asarray(q0) + weights[..., 1:2] * np.asarray(q1)


@dataclass(frozen=True)
class RiskPrediction:
    member: str
    cause: int
    ages: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    carrier_probability: float
    carrier_lower: float
    carrier_upper: float
    draws: np.ndarray


def _draw_indices(n: int, max_draws: int | None):
    if max_draws is None or n <= max_draws:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_draws).round().astype(int))


def _frailty_for_draw(samples: PosteriorSamples, s: int, mode: str, family_id: str, rng):
    K = samples.spec.K
    if not samples.spec.frailty or mode == "fixed":
        return np.ones(K)
    if mode == "fitted":
        if samples.log_xi is None or family_id not in samples.family_ids:
            raise KeyError(f"no fitted frailty for family {family_id!r}")
        return np.exp(samples.log_xi[s, samples.family_ids.index(family_id)])
    nu = samples.nus[s]
    # small precisions can underflow a draw to exactly zero
    return np.maximum(rng.gamma(nu, 1.0 / nu), np.finfo(float).tiny)


def predict_risk(p: Pedigree, member: str, cause: int, ages, samples: PosteriorSamples, prior,
                 frailty_mode: str = "gamma", level: float = 0.95, max_draws: int | None = None,
                 seed: int = 0, own_phenotype: bool = True) -> RiskPrediction:
    """Posterior mean and pointwise credible band of a member's risk curve.

    Parameters
    ----------
    p : Pedigree
        Family history; the member's own record enters as observed.
    member : str
    cause : int
        Cause index, 1-based.
    ages : array_like
        Ages on the original scale, at most the fitted time scale.
    samples : PosteriorSamples
    prior : float or array_like
        Allele frequency or founder genotype distribution.
    frailty_mode : {"gamma", "fixed", "fitted"}
        ``gamma`` draws a family frailty from its population distribution
        for each posterior draw; ``fixed`` sets it to one; ``fitted`` uses
        the family's sampled frailty (family must be in the fitted cohort).
    """
    if frailty_mode not in FRAILTY_MODES:
        raise ValueError(f"frailty_mode must be one of {FRAILTY_MODES}")
    if member not in p:
        raise KeyError(f"member {member!r} not in family {p.family_id}")
    samples.spec.cause(cause)
    ages = np.atleast_1d(np.asarray(ages, dtype=float))
    t = ages / samples.time_scale
    if np.any(t > 1) or np.any(t < 0):
        raise ValueError(f"ages must lie in [0, {samples.time_scale}]")
    x = p[member].male
    j = p.index[member]
    rng = np.random.default_rng(seed)
    idx = _draw_indices(samples.n_draws, max_draws)
    risks = np.empty((idx.size, ages.size))
    carrier = np.empty(idx.size)
    for r, s in enumerate(idx):
        m = samples.params(s)
        xi = _frailty_for_draw(samples, s, frailty_mode, p.family_id, rng)
        w = _collapsed(p, compute_messages(p, m, xi, prior), j, own_phenotype)
        q0 = cause_penetrance(m, cause, 0, x, t)
        q1 = cause_penetrance(m, cause, 1, x, t)
        risks[r] = np.clip(w[0] * q0 + w[1] * q1, 0.0, 1.0)
        carrier[r] = w[1]
    a = (1 - level) / 2
    lo, hi = np.quantile(risks, [a, 1 - a], axis=0)
    clo, chi = np.quantile(carrier, [a, 1 - a])
    return RiskPrediction(member, cause, ages, risks.mean(axis=0), lo, hi, float(carrier.mean()),
                          float(clo), float(chi), risks)
