"""Model comparison scores and cross-validated discrimination.

CPO is the leave-one-family-out predictive density estimated by the
harmonic mean of per-draw family likelihoods; PsML sums their logs. DIC is
the posterior mean deviance plus the effective number of parameters. ROC
curves score held-out members by predicted risk at a landmark age.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import genetics
from .errors import DataError, NumericalError
from .inference import PosteriorSamples, PriorSpec, SamplerConfig, run_chain
from .likelihood import CohortLikelihood
from .pedigree import Individual, Pedigree
from .peeling import compute_messages
from .predict import _draw_indices, _frailty_for_draw
from .riskmodel import ModelParams, ModelSpec, cause_penetrance

__all__ = [
    "family_loglik_matrix",
    "log_cpo",
    "cpo",
    "psml",
    "DICResult",
    "dic",
    "dic_from_deviance",
    "ROCCurve",
    "roc_curve",
    "auc_null_sd",
    "label_at_age",
    "score_members",
    "CrossValidatedROC",
    "cross_validated_roc",
]


def _check_alignment(samples: PosteriorSamples, data: CohortLikelihood):
    if samples.log_xi is not None and list(samples.family_ids) != list(data.cohort.family_ids):
        raise DataError("posterior draws and data refer to different families")
    if samples.spec != data.spec:
        raise DataError("posterior draws and data use different model specifications")


def family_loglik_matrix(samples: PosteriorSamples, data: CohortLikelihood, corrected: bool = True) -> np.ndarray:
    """Per-draw, per-family log-likelihood, shape ``(n_draws, n_families)``."""
    _check_alignment(samples, data)
    out = np.empty((samples.n_draws, data.n_families))
    for s in range(samples.n_draws):
        out[s] = data.evaluate(betas=[b[s] for b in samples.betas], baseline_params=[g[s] for g in samples.gammas],
                               log_xi=None if samples.log_xi is None else samples.log_xi[s], corrected=corrected)
    return out


def log_cpo(loglik) -> np.ndarray:
    """Log harmonic-mean CPO of each family from a ``(draws, families)`` matrix."""
    ll = np.atleast_2d(np.asarray(loglik, dtype=float))
    if ll.shape[0] < 1:
        raise ValueError("at least one draw is required")
    bad = ~np.isfinite(ll)
    if bad.any():
        fam = np.flatnonzero(bad.any(axis=0))
        raise NumericalError(f"non-finite family likelihood in draws for families at positions {fam[:5].tolist()}")
    return np.log(ll.shape[0]) - logsumexp(-ll, axis=0)


def cpo(samples: PosteriorSamples, data: CohortLikelihood, family: int | str | None = None):
    """Conditional predictive ordinate of one family (or all, as an array)."""
    ll = family_loglik_matrix(samples, data)
    out = np.exp(log_cpo(ll))
    if family is None:
        return out
    if isinstance(family, str):
        family = list(data.cohort.family_ids).index(family)
    return float(out[family])


def psml(samples: PosteriorSamples | None = None, data: CohortLikelihood | None = None, *, loglik=None) -> float:
    """Pseudo-marginal log-likelihood: the sum of log CPO over families."""
    if loglik is None:
        loglik = family_loglik_matrix(samples, data)
    return float(np.sum(log_cpo(loglik)))


@dataclass(frozen=True)
class DICResult:
    dic: float
    mean_deviance: float
    p_d: float
    deviance_at_mean: float


def dic_from_deviance(deviance_draws, deviance_at_mean: float) -> DICResult:
    dev = np.asarray(deviance_draws, dtype=float)
    if not np.all(np.isfinite(dev)) or not np.isfinite(deviance_at_mean):
        raise NumericalError("deviance is not finite")
    dbar = float(dev.mean())
    pd = dbar - float(deviance_at_mean)
    return DICResult(dbar + pd, dbar, pd, float(deviance_at_mean))


def dic(samples: PosteriorSamples, data: CohortLikelihood, loglik=None) -> DICResult:
    """Deviance information criterion of the corrected likelihood.

    The plug-in point averages the draws on the sampling scale (log scale
    for baseline coefficients, precisions and frailties).
    """
    if loglik is None:
        loglik = family_loglik_matrix(samples, data)
    dev = -2.0 * np.sum(loglik, axis=1)
    betas = [b.mean(axis=0) for b in samples.betas]
    with np.errstate(divide="ignore"):
        gammas = [np.exp(np.log(g).mean(axis=0)) for g in samples.gammas]
    log_xi = None if samples.log_xi is None else samples.log_xi.mean(axis=0)
    at_mean = -2.0 * float(np.sum(data.evaluate(betas=betas, baseline_params=gammas, log_xi=log_xi)))
    return dic_from_deviance(dev, at_mean)


# ---------------------------------------------------------------- ROC
@dataclass(frozen=True)
class ROCCurve:
    psi: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    n_positive: int
    n_negative: int


def roc_curve(scores, labels) -> ROCCurve:
    """ROC points over all thresholds ``psi``; a subject is called positive when ``score > psi``.

    Points run from ``(0, 0)`` to ``(1, 1)``; the AUC is the trapezoidal
    area, which equals the Mann-Whitney statistic with ties counted half.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-d arrays of equal length")
    if np.any(np.isnan(s)):
        raise ValueError("scores contain NaN")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError(f"degenerate labels: {n_pos} positive, {n_neg} negative")
    psi = np.concatenate([[-np.inf], np.unique(s)])[::-1]
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    tpr = (n_pos - np.searchsorted(pos, psi, side="right")) / n_pos
    fpr = (n_neg - np.searchsorted(neg, psi, side="right")) / n_neg
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return ROCCurve(psi, fpr, tpr, auc, n_pos, n_neg)


def auc_null_sd(n_positive: int, n_negative: int) -> float:
    """Standard deviation of the AUC when scores are unrelated to labels."""
    return float(np.sqrt((n_positive + n_negative + 1) / (12.0 * n_positive * n_negative)))


def label_at_age(ind: Individual, age: float, cause: int, spec: ModelSpec | None = None) -> int | None:
    """Outcome label at a landmark age.

    1 for an observed event of ``cause`` by ``age``; 0 if event-free at
    ``age`` or a different cause came first; ``None`` (excluded) when
    censored before ``age`` or when the cause is structurally impossible
    for the member's sex.
    """
    if spec is not None and bool(spec.constraint.fires(cause, 0, ind.male)):
        return None
    t, d = ind.phenotype.time, ind.phenotype.cause
    if d == cause and t <= age:
        return 1
    if t >= age or d != 0:
        return 0
    return None


def _penetrance_table(m: ModelParams, cause: int, t: float) -> np.ndarray:
    """``q[g, x]`` at rescaled time ``t``."""
    return np.array([[cause_penetrance(m, cause, g, x, t) for x in (0, 1)] for g in (0, 1)])


def score_members(pedigrees, samples: PosteriorSamples, prior, age: float, cause: int,
                  frailty_mode: str = "gamma", max_draws: int | None = 50, seed: int = 0,
                  include_probands: bool = False):
    """Predicted risk at ``age`` and landmark label of every labelled member.

    Each member's own outcome is left out of their carrier probability so
    the score does not see the label. Returns ``(ids, scores, labels)``.
    """
    t = age / samples.time_scale
    if not 0 < t <= 1:
        raise ValueError(f"landmark age must lie in (0, {samples.time_scale}]")
    members = []
    for f, p in enumerate(pedigrees):
        for j, ind in enumerate(p.members):
            if ind.is_proband and not include_probands:
                continue
            lab = label_at_age(ind, age, cause, samples.spec)
            if lab is not None:
                members.append((f, j, ind.male, lab))
    if not members:
        raise DataError("no labelled members at this age")
    rng = np.random.default_rng(seed)
    idx = _draw_indices(samples.n_draws, max_draws)
    scores = np.zeros(len(members))
    by_family: dict[int, list[int]] = {}
    for r, (f, *_rest) in enumerate(members):
        by_family.setdefault(f, []).append(r)
    for s in idx:
        m = samples.params(s)
        q = _penetrance_table(m, cause, t)
        for f, rows in by_family.items():
            p = pedigrees[f]
            xi = _frailty_for_draw(samples, s, frailty_mode, p.family_id, rng)
            msgs = compute_messages(p, m, xi, prior)
            for r in rows:
                _, j, x, _ = members[r]
                w = genetics.collapse(msgs.state_posterior(j, own_phenotype=False))
                scores[r] += w[0] * q[0, x] + w[1] * q[1, x]
    scores /= idx.size
    ids = [(pedigrees[f].family_id, pedigrees[f].members[j].id) for f, j, _, _ in members]
    return ids, scores, np.array([lab for *_, lab in members])


@dataclass(frozen=True)
class CrossValidatedROC:
    curves: list
    fpr_grid: np.ndarray
    tpr_mean: np.ndarray
    tpr_lower: np.ndarray
    tpr_upper: np.ndarray
    scores: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    @property
    def aucs(self) -> np.ndarray:
        return np.array([c.auc for c in self.curves])

    @property
    def auc(self) -> float:
        return float(self.aucs.mean())


def _tpr_on_grid(curve: ROCCurve, grid):
    # upper envelope of the staircase at each false-positive rate
    return np.interp(grid, curve.fpr, curve.tpr)


def cross_validated_roc(pedigrees, spec: ModelSpec, prior, age: float, cause: int, *,
                        rule=None, priors: PriorSpec = PriorSpec(), sampler: SamplerConfig = SamplerConfig(),
                        repetitions: int = 20, seed: int = 0, frailty_mode: str = "gamma",
                        max_draws: int | None = 50, level: float = 0.95, time_scale: float | None = None,
                        fit=None) -> CrossValidatedROC:
    """Repeated random half splits: fit on one half, score the other.

    ``fit(train_pedigrees, seed)`` may replace the default sampler run and
    must return :class:`PosteriorSamples`.
    """
    from .ascertainment import AscertainmentRule

    pedigrees = list(pedigrees)
    if len(pedigrees) < 2:
        raise DataError("cross-validation needs at least two families")
    rule = AscertainmentRule() if rule is None else rule
    if time_scale is None:
        time_scale = max(m.phenotype.time for p in pedigrees for m in p.members)
    seeds = np.random.SeedSequence(seed).spawn(repetitions)
    curves, all_scores, all_labels = [], [], []
    for ss in seeds:
        split_seed, fit_seed, score_seed = ss.generate_state(3)
        perm = np.random.default_rng(split_seed).permutation(len(pedigrees))
        half = len(pedigrees) // 2
        train = [pedigrees[i] for i in sorted(perm[:half])]
        test = [pedigrees[i] for i in sorted(perm[half:])]
        if fit is None:
            data = CohortLikelihood(train, spec, prior, rule, time_scale=time_scale)
            samples = run_chain(data, priors, replace(sampler, seed=int(fit_seed)))
        else:
            samples = fit(train, int(fit_seed))
        _, scores, labels = score_members(test, samples, prior, age, cause, frailty_mode, max_draws,
                                          int(score_seed))
        curves.append(roc_curve(scores, labels))
        all_scores.append(scores)
        all_labels.append(labels)
    grid = np.linspace(0.0, 1.0, 101)
    tprs = np.array([_tpr_on_grid(c, grid) for c in curves])
    a = (1 - level) / 2
    lo, hi = np.quantile(tprs, [a, 1 - a], axis=0)
    return CrossValidatedROC(curves, grid, tprs.mean(axis=0), lo, hi, all_scores, all_labels)
