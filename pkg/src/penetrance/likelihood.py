"""Vectorised cohort likelihood used by the sampler and the model scores.

Every quantity that depends only on the data (design matrices, baseline
bases at the observed ages, genotype masks, the probability of the observed
genotypes) is computed once. Parameter-dependent work is split per cause so
a sampler updating one cause only recomputes that cause's contribution.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .ascertainment import AscertainmentRule
from .baseline import _log_params
from .errors import DataError, ImpossiblePedigreeError, PedigreeError
from .peeling import CompiledCohort, _as_prior
from .pedigree import Pedigree, validate
from .riskmodel import ModelParams, ModelSpec

__all__ = ["CohortLikelihood", "CauseTerms"]


class CauseTerms(NamedTuple):
    contribution: np.ndarray
    cum_proband: np.ndarray
    loghaz_proband: np.ndarray | None


class CohortLikelihood:
    """Per-family ascertainment-corrected log-likelihoods for a fixed cohort.

    Parameters
    ----------
    pedigrees : sequence of Pedigree
    spec : ModelSpec
    prior : float or array_like
        Allele frequency or founder genotype distribution.
    rule : AscertainmentRule
        ``AscertainmentRule(None)`` switches the correction off.
    time_scale : float, optional
        Ages are divided by this; defaults to the largest observed age.
    threads : int
        Worker threads used for peeling.
    """

    def __init__(self, pedigrees, spec: ModelSpec, prior, rule: AscertainmentRule = AscertainmentRule(),
                 time_scale: float | None = None, threads: int = 1, kernel: str | None = None):
        self.pedigrees = list(pedigrees)
        if not self.pedigrees:
            raise DataError("cohort contains no families")
        for p in self.pedigrees:
            bad = validate(p, spec.K)
            if bad:
                v = bad[0]
                raise PedigreeError(v.message, p.family_id, p.row_of(v.individual) if v.individual else None)
        rule.validate_for(spec.K)
        self.spec = spec
        self.rule = rule
        self.prior = _as_prior(prior)
        self.threads = int(threads)
        self.kernel = kernel
        cc = CompiledCohort(self.pedigrees)
        self.cohort = cc
        self.n_families = cc.n_families
        self.n_persons = cc.n_persons
        self.fam_of = cc.fam_of
        self.time_scale = float(np.max(cc.time)) if time_scale is None else float(time_scale)
        if not self.time_scale > 0:
            raise DataError("time scale must be positive")
        t = cc.time / self.time_scale
        if np.any(t > 1.0):
            raise DataError(f"ages exceed the time scale {self.time_scale}")
        self.t = t
        self.static = cc.static_weights(self.prior)
        self.log_gobs = cc.peel(np.zeros((2, self.n_persons)), self.static, self.threads, kernel)
        dead = np.flatnonzero(~np.isfinite(self.log_gobs))
        if dead.size:
            raise ImpossiblePedigreeError(
                f"observed genotypes violate Mendelian transmission in families "
                f"{[cc.family_ids[i] for i in dead[:5]]}")
        self.basis = spec.baseline.precompute(t)
        self.male = cc.male
        # flat positions of (carrier, sex) in a 2 x 2 table, carrier-major
        self._gx_index = np.stack([cc.male, 2 + cc.male]).astype(np.intp)
        gx = np.array([[0, 1], [0, 1]]), np.array([[0, 0], [1, 1]])
        self._design_table = []  # (carrier, sex, term)
        self._zero_table = []
        self.zero = []
        self.event = []
        for k in range(1, spec.K + 1):
            self._design_table.append(spec.design(k, gx[0].T, gx[1].T))
            self._zero_table.append(spec.constraint.fires(k, gx[0].T, gx[1].T))
            z = spec.constraint.fires(k, 0, cc.male)
            ev = cc.cause == k
            clash = np.flatnonzero(ev & z)
            if clash.size:
                fam, pid = cc.ids[clash[0]]
                raise DataError(f"family {fam}, member {pid}: event of cause {k} has structurally zero hazard")
            self.zero.append(z)
            self.event.append(ev)
        self.proband = cc.proband
        if rule.cause is not None:
            wrong = np.flatnonzero(cc.cause[self.proband] != rule.cause)
            if wrong.size:
                raise DataError(f"probands of families {[cc.family_ids[i] for i in wrong[:5]]} do not meet "
                                f"the ascertainment rule (cause {rule.cause})")
        with np.errstate(divide="ignore"):
            self.log_carrier_weight = np.log([self.prior[0], self.prior[1] + self.prior[2]])
        self._event_idx = [np.flatnonzero(ev) for ev in self.event]
        self._zero_idx = [np.flatnonzero(z) for z in self.zero]
        self.event_counts = np.array([ev.sum() for ev in self.event])
        self.exposure = float(t.sum())

    # ------------------------------------------------------------------ causes
    def cause_terms(self, k: int, beta, baseline_params=None, log_xi_k=None, *, log_params=None) -> CauseTerms:
        """Log-likelihood contribution of cause ``k`` per carrier state and person.

        Arrays are carrier-major, shape ``(2, n_persons)``. Also returns the
        proband columns of the cumulative hazard and log hazard, which are
        all the ascertainment correction needs. Baseline parameters are given
        on the natural scale or, through ``log_params``, on the log scale;
        the latter stays finite when the natural-scale values would overflow.
        """
        if log_params is None:
            log_params = _log_params(baseline_params)
        log_cum0, log_haz0 = self.spec.baseline.log_evaluate(self.basis, log_params)
        # the linear predictor only depends on (carrier, sex): tabulate it
        eta = self._design_table[k - 1] @ np.asarray(beta, dtype=float)
        log_risk = np.where(self._zero_table[k - 1], -np.inf, eta)
        log_cum = log_risk.ravel().take(self._gx_index) + log_cum0
        if log_xi_k is not None:
            log_xi_k = np.asarray(log_xi_k, dtype=float)
            log_cum += log_xi_k[self.fam_of]
        with np.errstate(over="ignore"):
            cum = np.exp(log_cum)
        con = -cum
        ei = self._event_idx[k - 1]
        if ei.size:
            add = log_haz0[ei] + eta[:, self.male[ei]]
            if log_xi_k is not None:
                add += log_xi_k[self.fam_of[ei]]
            con[:, ei] += add
        pb = self.proband
        lh_pb = None
        if k == self.rule.cause:
            lh_pb = log_haz0[pb] + eta[:, self.male[pb]]
            if log_xi_k is not None:
                lh_pb = lh_pb + log_xi_k
        return CauseTerms(con, cum[:, pb], lh_pb)

    def family_loglik(self, logev, workspace=None) -> np.ndarray:
        """``log Pr(H_f | G_obs,f)`` for every family given summed contributions."""
        out = self.cohort.peel(logev, self.static, self.threads, self.kernel, workspace)
        out -= self.log_gobs
        out[np.isnan(out)] = -np.inf
        return out

    def log_ascertainment(self, terms) -> np.ndarray:
        """Per-family log ascertainment probability from all causes' terms."""
        if self.rule.cause is None:
            return np.zeros(self.n_families)
        cum = terms[0].cum_proband.copy()
        for t in terms[1:]:
            cum += t.cum_proband
        x = self.log_carrier_weight[:, None] + terms[self.rule.cause - 1].loghaz_proband - cum
        mx = x.max(axis=0)
        with np.errstate(invalid="ignore"):
            out = mx + np.log(np.exp(x - mx).sum(axis=0))
        out[~np.isfinite(mx)] = -np.inf
        return out

    # --------------------------------------------------------------- wholesale
    def evaluate(self, params: ModelParams | None = None, *, betas=None, baseline_params=None,
                 log_baseline_params=None, log_xi=None, corrected: bool = True) -> np.ndarray:
        """Per-family (corrected) log-likelihood at one parameter value.

        Either pass ``params`` or the raw arrays. ``log_xi`` has shape
        ``(n_families, K)``; ``None`` means no frailty. Baseline parameters
        may instead be given on the log scale as ``log_baseline_params``.
        """
        if params is not None:
            betas = [c.beta for c in params.causes]
            baseline_params = [c.baseline.params for c in params.causes]
        terms = []
        for k in range(1, self.spec.K + 1):
            lx = None if log_xi is None else np.asarray(log_xi)[:, k - 1]
            if log_baseline_params is None:
                terms.append(self.cause_terms(k, betas[k - 1], baseline_params[k - 1], lx))
            else:
                terms.append(self.cause_terms(k, betas[k - 1], None, lx, log_params=log_baseline_params[k - 1]))
        ll = self.family_loglik(sum(t.contribution for t in terms))
        if corrected and self.rule.cause is not None:
            ll = ll - self.log_ascertainment(terms)
        return ll
