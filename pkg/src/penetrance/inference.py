"""Posterior sampling by random-walk Metropolis within Gibbs.

Blocks are visited cause by cause in a fixed order: each regression
coefficient, each baseline coefficient, the frailty precision, then the
frailties of all families (accepted or rejected family by family, which is
valid because families are conditionally independent). Positive quantities
move on the log scale with the Jacobian included in the acceptance ratio.
Proposal scales follow a Robbins-Monro recursion during burn-in and are
frozen afterwards.
"""
from __future__ import annotations

import io
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, NumericalError
from .likelihood import CauseTerms, CohortLikelihood
from .riskmodel import ModelParams, ModelSpec, cause_penetrance

__all__ = [
    "PriorSpec",
    "SamplerConfig",
    "ChainState",
    "PosteriorSamples",
    "PenetranceCurve",
    "metropolis_accept",
    "log_posterior",
    "initial_state",
    "run_chain",
    "run_chains",
    "combine_chains",
    "split_rhat",
    "summarize",
    "write_summary",
    "penetrance_posterior",
    "write_draws",
    "read_draws",
]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Prior hyperparameters.

    ``gamma_prior`` of ``None`` is the flat prior on nonnegative baseline
    coefficients; otherwise a ``(shape, rate)`` gamma prior.
    """

    beta_sd: float = 10.0
    gamma_prior: tuple | None = None
    nu_prior: tuple = (0.01, 0.01)

    def __post_init__(self):
        if not self.beta_sd > 0:
            raise ConfigError("beta_sd must be positive")
        for name in ("gamma_prior", "nu_prior"):
            v = getattr(self, name)
            if v is None and name == "gamma_prior":
                continue
            v = tuple(float(x) for x in v)
            if len(v) != 2 or not all(x > 0 for x in v):
                raise ConfigError(f"{name} needs two positive hyperparameters (shape, rate)")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 100_000
    burn_in: int = 10_000
    thin: int = 5
    seed: int = 0
    chains: int = 1
    target_accept: float = 0.234
    initial_scale: float = 0.5
    adapt_exponent: float = 0.6
    threads: int = 1
    use_likelihood: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError("burn_in must satisfy 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ConfigError("thin must be at least 1")
        if self.chains < 1:
            raise ConfigError("chains must be at least 1")
        if not 0 < self.target_accept < 1:
            raise ConfigError("target_accept must lie in (0, 1)")
        if not 0.5 < self.adapt_exponent <= 1:
            raise ConfigError("adapt_exponent must lie in (0.5, 1]")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainState:
    """Parameter values on the sampling scale.

    ``log_xi`` is ``None`` for models without frailty.
    """

    betas: list
    log_gamma: list
    log_nu: np.ndarray
    log_xi: np.ndarray | None

    def copy(self) -> "ChainState":
        return ChainState([b.copy() for b in self.betas], [g.copy() for g in self.log_gamma],
                          self.log_nu.copy(), None if self.log_xi is None else self.log_xi.copy())

    @property
    def gammas(self):
        return [np.exp(g) for g in self.log_gamma]

    @property
    def nus(self):
        return np.exp(self.log_nu)


def metropolis_accept(log_ratio, u) -> np.ndarray:
    """Metropolis decision ``log u < log_ratio`` (NaN ratios reject)."""
    # NaN compares false, so an undefined ratio rejects
    with np.errstate(divide="ignore"):
        return np.log(u) < log_ratio


# ---------------------------------------------------------------- log priors
_LOG_GAMMA_MAX = float(np.log(np.finfo(float).max))


def _lp_beta(beta, sd):
    return float(np.sum(-0.5 * (beta / sd) ** 2 - np.log(sd) - 0.5 * _LOG_2PI))


def _lp_gamma_dist(log_x, shape, rate):
    """Gamma(shape, rate) log density at ``exp(log_x)``."""
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * log_x - rate * np.exp(log_x)


def _lp_baseline(log_gamma, prior: PriorSpec):
    # coefficients must be representable: the flat prior is truncated at the largest double
    if np.any(np.asarray(log_gamma) > _LOG_GAMMA_MAX):
        return -np.inf
    if prior.gamma_prior is None:
        return 0.0
    return float(np.sum(_lp_gamma_dist(log_gamma, *prior.gamma_prior)))


def _lp_frailty(log_xi_k, nu):
    """Gamma(nu, nu) log density of each family frailty."""
    return nu * np.log(nu) - gammaln(nu) + (nu - 1.0) * log_xi_k - nu * np.exp(log_xi_k)


def _log_prior(state: ChainState, prior: PriorSpec, frailty: bool) -> float:
    out = 0.0
    for k in range(len(state.betas)):
        out += _lp_beta(state.betas[k], prior.beta_sd) + _lp_baseline(state.log_gamma[k], prior)
        if frailty:
            nu = np.exp(state.log_nu[k])
            out += float(_lp_gamma_dist(state.log_nu[k], *prior.nu_prior))
            # a prior-only chain can reach nu ~ 0 where the frailty density degenerates
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                out += float(np.sum(_lp_frailty(state.log_xi[:, k], nu)))
    return out


def log_posterior(state: ChainState, data: CohortLikelihood, prior: PriorSpec,
                  use_likelihood: bool = True) -> float:
    """Unnormalised log posterior density of the natural-scale parameters.

    Sum over families of the ascertainment-corrected log-likelihood plus the
    log priors of regression and baseline coefficients, frailties given
    their precision, and the precisions. Off-support states give ``-inf``.
    """
    for g in state.log_gamma:
        if np.any(np.isnan(g)) or np.any(np.isposinf(g)):
            return -np.inf
    if np.any(~np.isfinite(state.log_nu)) and data.spec.frailty:
        return -np.inf
    if state.log_xi is not None and np.any(~np.isfinite(state.log_xi)):
        return -np.inf
    lp = _log_prior(state, prior, data.spec.frailty)
    if not use_likelihood:
        return lp
    if lp == -np.inf:
        return -np.inf
    ll = data.evaluate(betas=state.betas, log_baseline_params=state.log_gamma, log_xi=state.log_xi)
    return float(np.sum(ll) + lp)


def _state_from_natural(betas, gammas, nus, xis) -> ChainState:
    """Build a :class:`ChainState`; a negative ``gamma`` maps to NaN (off support)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = [np.log(np.asarray(g, dtype=float)) for g in gammas]
        lx = None if xis is None else np.log(np.asarray(xis, dtype=float))
        ln = np.log(np.asarray(nus, dtype=float))
    return ChainState([np.asarray(b, dtype=float) for b in betas], lg, ln, lx)


def initial_state(data: CohortLikelihood) -> ChainState:
    """Zero regression coefficients, crude pooled baseline, unit frailty."""
    spec = data.spec
    betas, lg = [], []
    for k in range(1, spec.K + 1):
        betas.append(np.zeros(len(spec.cause(k).terms)))
        rate = max(data.event_counts[k - 1], 1) / max(data.exposure, 1e-12)
        lg.append(np.log(spec.baseline.initial_params(rate)))
    log_xi = np.zeros((data.n_families, spec.K)) if spec.frailty else None
    return ChainState(betas, lg, np.zeros(spec.K), log_xi)


# ---------------------------------------------------------------- samples
@dataclass
class PosteriorSamples:
    """Retained draws of one chain (or several, concatenated).

    Arrays are indexed by draw first. ``trace`` holds the log posterior at
    every iteration, burn-in included; ``log_post`` at retained draws only.
    """

    spec: ModelSpec
    time_scale: float
    family_ids: list
    betas: list
    gammas: list
    nus: np.ndarray
    log_xi: np.ndarray | None
    log_post: np.ndarray
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    acceptance: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    chain_id: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return len(self.log_post)

    @property
    def xi(self):
        return None if self.log_xi is None else np.exp(self.log_xi)

    def params(self, s: int) -> ModelParams:
        """Model parameters at retained draw ``s``."""
        nus = self.nus[s] if self.spec.frailty else np.full(self.spec.K, np.inf)
        return ModelParams.from_arrays(self.spec, [b[s] for b in self.betas], [g[s] for g in self.gammas],
                                       nus, self.time_scale)

    def mean_params(self) -> ModelParams:
        nus = self.nus.mean(axis=0) if self.spec.frailty else np.full(self.spec.K, np.inf)
        return ModelParams.from_arrays(self.spec, [b.mean(axis=0) for b in self.betas],
                                       [g.mean(axis=0) for g in self.gammas], nus, self.time_scale)

    def columns(self, include_xi: bool = True) -> tuple[list[str], np.ndarray]:
        """Scalar parameter names and the ``(n_draws, n_params)`` draw matrix."""
        names, cols = [], []
        for k, c in enumerate(self.spec.causes, start=1):
            for j, term in enumerate(c.terms):
                names.append(f"beta[{k},{term}]")
                cols.append(self.betas[k - 1][:, j])
        for k in range(1, self.spec.K + 1):
            for j, pn in enumerate(self.spec.baseline.param_names()):
                names.append(f"gamma[{k},{pn}]")
                cols.append(self.gammas[k - 1][:, j])
        if self.spec.frailty:
            for k in range(1, self.spec.K + 1):
                names.append(f"nu[{k}]")
                cols.append(self.nus[:, k - 1])
            if include_xi and self.log_xi is not None:
                for f, fid in enumerate(self.family_ids):
                    for k in range(1, self.spec.K + 1):
                        names.append(f"xi[{fid},{k}]")
                        cols.append(np.exp(self.log_xi[:, f, k - 1]))
        mat = np.column_stack(cols) if cols else np.zeros((self.n_draws, 0))
        return names, mat


def combine_chains(chains: list[PosteriorSamples]) -> PosteriorSamples:
    """Concatenate the draws of several chains of the same model."""
    first = chains[0]
    cat = np.concatenate
    return PosteriorSamples(
        first.spec, first.time_scale, first.family_ids,
        [cat([c.betas[k] for c in chains]) for k in range(first.spec.K)],
        [cat([c.gammas[k] for c in chains]) for k in range(first.spec.K)],
        cat([c.nus for c in chains]),
        None if first.log_xi is None else cat([c.log_xi for c in chains]),
        cat([c.log_post for c in chains]),
        cat([c.trace for c in chains]),
        {f"chain{i}:{k}": v for i, c in enumerate(chains) for k, v in c.acceptance.items()},
        {},
        cat([np.full(c.n_draws, i) for i, c in enumerate(chains)]),
    )


# ---------------------------------------------------------------- sampler
class _Chain:
    """Mutable sampler state with incrementally maintained likelihood caches."""

    def __init__(self, data: CohortLikelihood, prior: PriorSpec, config: SamplerConfig, state: ChainState,
                 rng: np.random.Generator):
        self.data = data
        self.prior = prior
        self.config = config
        self.state = state
        self.rng = rng
        self.K = data.spec.K
        self.frailty = data.spec.frailty
        self.use_lik = config.use_likelihood
        self.workspace = data.cohort.workspace()
        s0 = np.log(config.initial_scale)
        self.log_scale = {
            "beta": [np.full(b.size, s0) for b in state.betas],
            "gamma": [np.full(g.size, s0) for g in state.log_gamma],
            "nu": np.full(self.K, s0),
            "xi": np.full((data.n_families, self.K), s0),
        }
        self.accepted = {name: np.zeros(self.K) for name in ("beta", "gamma", "nu", "xi")}
        self.proposed = {name: np.zeros(self.K) for name in ("beta", "gamma", "nu", "xi")}
        self.refresh()

    # caches ----------------------------------------------------------------
    def _lxk(self, k, state=None):
        st = self.state if state is None else state
        return None if st.log_xi is None else st.log_xi[:, k - 1]

    def refresh(self):
        """Recompute every cache from the current state."""
        if not self.use_lik:
            self.ll = np.zeros(self.data.n_families)
            self.asc = np.zeros(self.data.n_families)
            return
        self.terms = [self.data.cause_terms(k, self.state.betas[k - 1], None, self._lxk(k),
                                            log_params=self.state.log_gamma[k - 1]) for k in range(1, self.K + 1)]
        self.ll, self.asc = self._family_terms(self.terms)

    def _family_terms(self, terms):
        logev = terms[0].contribution.copy()
        for t in terms[1:]:
            logev += t.contribution
        ll = self.data.family_loglik(logev, self.workspace)
        return ll, self.data.log_ascertainment(terms)

    def _propose_cause(self, k, beta, log_gamma, log_xi_k):
        new = self.data.cause_terms(k, beta, None, log_xi_k, log_params=log_gamma)
        terms = list(self.terms)
        terms[k - 1] = new
        ll, asc = self._family_terms(terms)
        return new, ll, asc

    def data_term(self) -> float:
        with np.errstate(invalid="ignore"):
            return float(np.sum(self.ll - self.asc))

    def log_post(self) -> float:
        return self.data_term() + _log_prior(self.state, self.prior, self.frailty)

    # updates ---------------------------------------------------------------
    def _adapt(self, arr, idx, acc, gain):
        arr[idx] += gain * (np.asarray(acc, dtype=float) - self.config.target_accept)

    def _scalar_step(self, k, block, j, gain, count):
        st = self.state
        scale = np.exp(self.log_scale[block][k - 1][j])
        z = self.rng.standard_normal()
        u = self.rng.random()
        if block == "beta":
            beta = st.betas[k - 1].copy()
            beta[j] += scale * z
            lg = st.log_gamma[k - 1]
            dprior = _lp_beta(beta[j], self.prior.beta_sd) - _lp_beta(st.betas[k - 1][j], self.prior.beta_sd)
        else:
            beta = st.betas[k - 1]
            lg = st.log_gamma[k - 1].copy()
            lg[j] += scale * z
            old = st.log_gamma[k - 1][j]
            # log-scale move: the Jacobian adds the log coefficient
            dprior = (_lp_baseline(lg[j:j + 1], self.prior) - _lp_baseline(st.log_gamma[k - 1][j:j + 1], self.prior)
                      + lg[j] - old)
        if self.use_lik and dprior > -np.inf:
            arrays, ll, asc = self._propose_cause(k, beta, lg, self._lxk(k))
            # a family whose likelihood and ascertainment both underflow gives NaN: reject
            with np.errstate(invalid="ignore"):
                ratio = float(np.sum(ll - asc)) - self.data_term() + dprior
        else:
            ratio = dprior
        ok = bool(metropolis_accept(ratio, u))
        if ok:
            if block == "beta":
                st.betas[k - 1] = beta
            else:
                st.log_gamma[k - 1] = lg
            if self.use_lik:
                self.terms[k - 1] = arrays
                self.ll, self.asc = ll, asc
        if gain:
            self._adapt(self.log_scale[block][k - 1], j, ok, gain)
        if count:
            self.proposed[block][k - 1] += 1
            self.accepted[block][k - 1] += ok

    def _nu_step(self, k, gain, count):
        st = self.state
        a, b = self.prior.nu_prior
        scale = np.exp(self.log_scale["nu"][k - 1])
        z = self.rng.standard_normal()
        u = self.rng.random()
        old = st.log_nu[k - 1]
        new = old + scale * z
        # Gamma(a, b) prior with the log-scale Jacobian
        with np.errstate(over="ignore"):
            ratio = a * (new - old) - b * (np.exp(new) - np.exp(old))
        if self.use_lik:
            lx = st.log_xi[:, k - 1]
            ratio += float(np.sum(_lp_frailty(lx, np.exp(new))) - np.sum(_lp_frailty(lx, np.exp(old))))
        ok = bool(metropolis_accept(ratio, u))
        if ok:
            st.log_nu[k - 1] = new
        if gain:
            self._adapt(self.log_scale["nu"], k - 1, ok, gain)
        if count:
            self.proposed["nu"][k - 1] += 1
            self.accepted["nu"][k - 1] += ok

    def _xi_step(self, k, gain, count):
        st = self.state
        nf = self.data.n_families
        nu = np.exp(st.log_nu[k - 1])
        if not self.use_lik:
            # without a likelihood the conditional is the prior itself: draw
            # log Gamma(nu, nu) exactly, stably for tiny shapes
            g1 = self.rng.standard_gamma(nu + 1.0, size=nf)
            u = self.rng.random(nf)
            # log(u) / nu written through log nu; an underflowing nu sends log xi to -inf
            ln = st.log_nu[k - 1]
            with np.errstate(over="ignore", divide="ignore"):
                st.log_xi[:, k - 1] = np.log(g1) - np.exp(np.log(-np.log(u)) - ln) - ln
            if count:
                self.proposed["xi"][k - 1] += 1
                self.accepted["xi"][k - 1] += 1
            return
        scale = np.exp(self.log_scale["xi"][:, k - 1])
        z = self.rng.standard_normal(nf)
        u = self.rng.random(nf)
        old = st.log_xi[:, k - 1]
        new = old + scale * z
        arrays, ll, asc = self._propose_cause(k, st.betas[k - 1], st.log_gamma[k - 1], new)
        with np.errstate(invalid="ignore", over="ignore"):
            ratio = (ll - asc) - (self.ll - self.asc) + _lp_frailty(new, nu) - _lp_frailty(old, nu) + (new - old)
        ok = metropolis_accept(ratio, u)
        rows = ok[self.data.fam_of]
        cur = self.terms[k - 1]
        self.terms[k - 1] = CauseTerms(
            np.where(rows, arrays.contribution, cur.contribution),
            np.where(ok, arrays.cum_proband, cur.cum_proband),
            None if cur.loghaz_proband is None else np.where(ok, arrays.loghaz_proband, cur.loghaz_proband))
        self.ll = np.where(ok, ll, self.ll)
        self.asc = np.where(ok, asc, self.asc)
        st.log_xi[:, k - 1] = np.where(ok, new, old)
        if gain:
            self.log_scale["xi"][:, k - 1] += gain * (ok.astype(float) - self.config.target_accept)
        if count:
            self.proposed["xi"][k - 1] += 1
            self.accepted["xi"][k - 1] += ok.mean()

    def sweep(self, gain: float, count: bool):
        for k in range(1, self.K + 1):
            for j in range(self.state.betas[k - 1].size):
                self._scalar_step(k, "beta", j, gain, count)
            for j in range(self.state.log_gamma[k - 1].size):
                self._scalar_step(k, "gamma", j, gain, count)
            if self.frailty:
                self._nu_step(k, gain, count)
                self._xi_step(k, gain, count)


def _checkpoint_payload(chain: _Chain, it: int, store: dict) -> dict:
    st = chain.state
    out = {
        "iteration": np.array(it),
        "rng": np.array(json.dumps(chain.rng.bit_generator.state)),
        "log_nu": st.log_nu,
        "accepted": np.array([chain.accepted[n] for n in ("beta", "gamma", "nu", "xi")]),
        "proposed": np.array([chain.proposed[n] for n in ("beta", "gamma", "nu", "xi")]),
        "scale_nu": chain.log_scale["nu"],
        "scale_xi": chain.log_scale["xi"],
    }
    if st.log_xi is not None:
        out["log_xi"] = st.log_xi
    for k in range(chain.K):
        out[f"beta{k}"] = st.betas[k]
        out[f"log_gamma{k}"] = st.log_gamma[k]
        out[f"scale_beta{k}"] = chain.log_scale["beta"][k]
        out[f"scale_gamma{k}"] = chain.log_scale["gamma"][k]
    for name, arr in store.items():
        if isinstance(arr, list):
            for k, a in enumerate(arr):
                out[f"draw_{name}{k}"] = a
        elif arr is not None:
            out[f"draw_{name}"] = arr
    return out


def _restore(chain: _Chain, ck, store: dict) -> int:
    st = chain.state
    st.log_nu = np.array(ck["log_nu"])
    if st.log_xi is not None:
        st.log_xi = np.array(ck["log_xi"])
    for k in range(chain.K):
        st.betas[k] = np.array(ck[f"beta{k}"])
        st.log_gamma[k] = np.array(ck[f"log_gamma{k}"])
        chain.log_scale["beta"][k] = np.array(ck[f"scale_beta{k}"])
        chain.log_scale["gamma"][k] = np.array(ck[f"scale_gamma{k}"])
    chain.log_scale["nu"] = np.array(ck["scale_nu"])
    chain.log_scale["xi"] = np.array(ck["scale_xi"])
    for i, n in enumerate(("beta", "gamma", "nu", "xi")):
        chain.accepted[n] = np.array(ck["accepted"][i])
        chain.proposed[n] = np.array(ck["proposed"][i])
    chain.rng.bit_generator.state = json.loads(str(ck["rng"]))
    for name, arr in store.items():
        if isinstance(arr, list):
            for k in range(len(arr)):
                arr[k][...] = ck[f"draw_{name}{k}"]
        elif arr is not None:
            arr[...] = ck[f"draw_{name}"]
    chain.refresh()
    return int(ck["iteration"])


def run_chain(data: CohortLikelihood, prior: PriorSpec = PriorSpec(), config: SamplerConfig = SamplerConfig(),
              init: ChainState | None = None, seed=None, checkpoint: str | os.PathLike | None = None,
              checkpoint_every: int = 0, resume: bool = False, progress=None) -> PosteriorSamples:
    """Run one Metropolis-within-Gibbs chain.

    Parameters
    ----------
    data : CohortLikelihood
    prior : PriorSpec
    config : SamplerConfig
    init : ChainState, optional
        Starting point; defaults to :func:`initial_state`.
    seed : int or numpy.random.SeedSequence, optional
        Overrides ``config.seed``.
    checkpoint : path, optional
        ``.npz`` file written every ``checkpoint_every`` iterations and at
        the end; with ``resume`` the chain continues from it and produces
        the same draws as an uninterrupted run.
    progress : callable, optional
        Called as ``progress(iteration, log_posterior)``.

    Returns
    -------
    PosteriorSamples
    """
    data.threads = config.threads
    state = (init or initial_state(data)).copy()
    if not data.spec.frailty:
        state.log_xi = None
    rng = np.random.default_rng(config.seed if seed is None else seed)
    chain = _Chain(data, prior, config, state, rng)
    lp0 = chain.log_post()
    if not np.isfinite(lp0):
        with np.errstate(invalid="ignore"):
            lost = np.flatnonzero(~np.isfinite(chain.ll - chain.asc))
        bad = [data.cohort.family_ids[i] for i in lost[:5]]
        raise NumericalError(f"log posterior is not finite at the initial state (value {lp0}); "
                             f"offending families: {bad or 'none (prior)'}")
    K = data.spec.K
    S = config.n_draws
    nf = data.n_families
    store = {
        "beta": [np.empty((S, b.size)) for b in state.betas],
        "gamma": [np.empty((S, g.size)) for g in state.log_gamma],
        "nu": np.empty((S, K)),
        "log_xi": np.empty((S, nf, K)) if data.spec.frailty else None,
        "log_post": np.empty(S),
        "trace": np.empty(config.iterations),
    }
    start = 0
    if resume and checkpoint is not None and os.path.exists(checkpoint):
        with np.load(checkpoint) as ck:
            start = _restore(chain, ck, store)
    for it in range(start + 1, config.iterations + 1):
        in_burn = it <= config.burn_in
        gain = min(1.0, it ** -config.adapt_exponent) if in_burn else 0.0
        chain.sweep(gain, count=not in_burn)
        lp = chain.log_post()
        store["trace"][it - 1] = lp
        if not in_burn and (it - config.burn_in) % config.thin == 0:
            s = (it - config.burn_in) // config.thin - 1
            with np.errstate(over="ignore"):
                for k in range(K):
                    store["beta"][k][s] = chain.state.betas[k]
                    store["gamma"][k][s] = np.exp(chain.state.log_gamma[k])
                store["nu"][s] = np.exp(chain.state.log_nu) if data.spec.frailty else np.inf
            if store["log_xi"] is not None:
                store["log_xi"][s] = chain.state.log_xi
            store["log_post"][s] = lp
        if progress is not None:
            progress(it, lp)
        if checkpoint is not None and checkpoint_every and it % checkpoint_every == 0 and it < config.iterations:
            np.savez(checkpoint, **_checkpoint_payload(chain, it, store))
    if checkpoint is not None:
        np.savez(checkpoint, **_checkpoint_payload(chain, config.iterations, store))
    acceptance = {}
    for name in ("beta", "gamma", "nu", "xi"):
        for k in range(K):
            n = chain.proposed[name][k]
            if n:
                acceptance[f"{name}[{k + 1}]"] = float(chain.accepted[name][k] / n)
    scales = {f"{n}[{k + 1}]": np.exp(np.atleast_1d(chain.log_scale[n][k] if n in ("beta", "gamma")
                                                   else chain.log_scale[n][..., k])).tolist()
              for n in ("beta", "gamma", "nu", "xi") for k in range(K)}
    return PosteriorSamples(data.spec, data.time_scale, list(data.cohort.family_ids), store["beta"],
                            store["gamma"], store["nu"], store["log_xi"], store["log_post"], store["trace"],
                            acceptance, scales)


def run_chains(data_factory, prior: PriorSpec = PriorSpec(), config: SamplerConfig = SamplerConfig(),
               parallel: bool = False) -> list[PosteriorSamples]:
    """Independent chains with seeds spawned from ``config.seed``.

    ``data_factory()`` must return a :class:`CohortLikelihood`; each chain
    gets its own so no caches are shared.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    one = replace(config, chains=1)

    def work(ss):
        return run_chain(data_factory(), prior, one, seed=ss)

    if parallel and config.chains > 1:
        with ThreadPoolExecutor(config.chains) as ex:
            return list(ex.map(work, seeds))
    return [work(ss) for ss in seeds]


def split_rhat(draws) -> np.ndarray:
    """Split-chain potential scale reduction.

    ``draws`` has shape ``(n_chains, n_draws)`` or
    ``(n_chains, n_draws, n_params)``; each chain is split in half.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    n = x.shape[1] // 2
    if n < 2:
        raise ValueError("need at least four draws per chain")
    halves = np.concatenate([x[:, :n], x[:, n:2 * n]], axis=0)
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean(axis=0)
    between = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * within + between / n
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(var_plus / within)
    return np.where(within > 0, r, np.where(between > 0, np.inf, 1.0))


# ---------------------------------------------------------------- summaries
def _quantile_labels(level: float) -> tuple[str, str]:
    lo = 100 * (1 - level) / 2
    return f"{lo:g}%", f"{100 - lo:g}%"


def summarize(samples, level: float = 0.95, include_xi: bool = False):
    """Posterior mean, sd and equal-tailed credible bounds per scalar parameter.

    ``samples`` is a :class:`PosteriorSamples` or a mapping from name to a
    1-d draw array. Quantiles use linear interpolation between order
    statistics. Returns a list of ``(name, mean, sd, lower, upper)`` rows.
    """
    if not 0 < level < 1:
        raise ValueError("credible level must lie in (0, 1)")
    if isinstance(samples, PosteriorSamples):
        names, mat = samples.columns(include_xi)
    else:
        names = list(samples)
        mat = np.column_stack([np.asarray(samples[n], dtype=float) for n in names]) if names else None
    if mat is None or mat.shape[0] == 0:
        raise ValueError("no draws to summarise")
    a = (1 - level) / 2
    lo, hi = np.quantile(mat, [a, 1 - a], axis=0)
    sd = mat.std(axis=0, ddof=1) if mat.shape[0] > 1 else np.zeros(mat.shape[1])
    return [(n, float(m), float(s), float(l), float(h)) for n, m, s, l, h in zip(names, mat.mean(axis=0), sd, lo, hi)]


def write_summary(rows, dest, level: float = 0.95) -> None:
    lo, hi = _quantile_labels(level)
    lines = ["\t".join(["parameter", "mean", "sd", lo, hi])]
    lines += ["\t".join([r[0]] + [repr(float(v)) for v in r[1:]]) for r in rows]
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="\n") as fh:
            fh.write(text)


@dataclass(frozen=True)
class PenetranceCurve:
    ages: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    draws: np.ndarray


def penetrance_posterior(samples: PosteriorSamples, cause: int, g: int, x: int, ages, level: float = 0.95,
                         max_draws: int | None = None) -> PenetranceCurve:
    """Pointwise posterior mean and credible band of a penetrance curve.

    The frailty is integrated out analytically in every draw's curve.
    """
    ages = np.asarray(ages, dtype=float)
    idx = np.arange(samples.n_draws)
    if max_draws is not None and samples.n_draws > max_draws:
        idx = np.unique(np.linspace(0, samples.n_draws - 1, max_draws).round().astype(int))
    t = ages / samples.time_scale
    if np.any(t > 1):
        raise ValueError(f"ages beyond the fitted range (max {samples.time_scale})")
    curves = np.array([cause_penetrance(samples.params(s), cause, g, x, t) for s in idx])
    a = (1 - level) / 2
    lo, hi = np.quantile(curves, [a, 1 - a], axis=0)
    return PenetranceCurve(ages, curves.mean(axis=0), lo, hi, curves)


# ---------------------------------------------------------------- draw files
_NAME = re.compile(r"^(beta|gamma|nu|xi|log_post)(?:\[(.*)\])?$")


def write_draws(samples: PosteriorSamples, dest) -> None:
    """Tab-separated draws with one named column per scalar parameter."""
    names, mat = samples.columns(include_xi=True)
    buf = io.StringIO()
    buf.write("\t".join(names + ["log_post"]) + "\n")
    for row, lp in zip(mat, samples.log_post):
        buf.write("\t".join(repr(float(v)) for v in row) + "\t" + repr(float(lp)) + "\n")
    if hasattr(dest, "write"):
        dest.write(buf.getvalue())
    else:
        with open(dest, "w", newline="\n") as fh:
            fh.write(buf.getvalue())


def read_draws(source, spec: ModelSpec, time_scale: float) -> PosteriorSamples:
    """Inverse of :func:`write_draws`."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as fh:
            text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split("\t")
    mat = np.array([[float(v) for v in ln.split("\t")] for ln in lines[1:]]).reshape(len(lines) - 1, len(header))
    col = {h: mat[:, i] for i, h in enumerate(header)}
    K = spec.K
    betas = [np.column_stack([col[f"beta[{k},{t}]"] for t in spec.cause(k).terms])
             if spec.cause(k).terms else np.zeros((len(mat), 0)) for k in range(1, K + 1)]
    gammas = [np.column_stack([col[f"gamma[{k},{pn}]"] for pn in spec.baseline.param_names()])
              for k in range(1, K + 1)]
    nus = (np.column_stack([col[f"nu[{k}]"] for k in range(1, K + 1)]) if spec.frailty
           else np.full((len(mat), K), np.inf))
    fams = []
    for h in header:
        m = _NAME.match(h)
        if m is None:
            raise ValueError(f"unrecognised draw column {h!r}")
        if m.group(1) == "xi":
            fid = m.group(2).rsplit(",", 1)[0]
            if fid not in fams:
                fams.append(fid)
    log_xi = None
    if spec.frailty and fams:
        log_xi = np.log(np.stack([np.column_stack([col[f"xi[{f},{k}]"] for k in range(1, K + 1)]) for f in fams],
                                 axis=1))
    return PosteriorSamples(spec, time_scale, fams, betas, gammas, nus, log_xi, col["log_post"])
