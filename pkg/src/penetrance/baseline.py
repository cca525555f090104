"""Cause-specific baseline hazards on rescaled time ``t in [0, 1]``.

The main model writes the cumulative baseline hazard as a nonnegative
mixture of Beta(m, M - m + 1) distribution functions, which keeps it monotone
for any nonnegative coefficient vector. Exponential, Weibull and
piecewise-constant baselines share the same interface and exist for model
comparison.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, comb, xlogy


def _log_mix(basis, log_coeffs):
    """``log(basis @ exp(log_coeffs))`` without overflow for huge coefficients."""
    top = np.max(log_coeffs)
    if top == -np.inf:
        return np.full(basis.shape[:-1], -np.inf)
    with np.errstate(divide="ignore"):
        return np.log(basis @ np.exp(log_coeffs - top)) + top


def _log_params(params):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(params, dtype=float))


def _as_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise ValueError("rescaled time must lie in [0, 1]")
    return arr


def bernstein_basis(t, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Beta distribution functions ``B_M(t, m)`` and densities ``b_M(t, m)``.

    Returns two arrays of shape ``t.shape + (degree,)`` for ``m = 1..degree``.
    """
    t = _as_time(t)
    m = np.arange(1, degree + 1, dtype=float)
    tt = t[..., None]
    cdf = betainc(m, degree - m + 1.0, tt)
    # Beta(m, M-m+1) density = M * C(M-1, m-1) t^(m-1) (1-t)^(M-m)
    coef = degree * comb(degree - 1, m - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pdf = coef * np.power(tt, m - 1) * np.power(1.0 - tt, degree - m)
    return cdf, pdf


@dataclass(frozen=True)
class BernsteinBaseline:
    """Cumulative baseline ``gamma^T B_M(t)``; ``coeffs`` are the increments
    ``gamma_m >= 0`` of the monotone Bernstein weights."""

    coeffs: tuple

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size < 1:
            raise ValueError("Bernstein degree must be at least 1")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("Bernstein coefficients must be finite and nonnegative")
        object.__setattr__(self, "coeffs", tuple(float(x) for x in c))

    @property
    def degree(self) -> int:
        return len(self.coeffs)

    @property
    def params(self) -> np.ndarray:
        return np.array(self.coeffs)

    @property
    def weights(self) -> np.ndarray:
        """Monotone values ``omega_l = Lambda_0(l / M)``, ``l = 1..M``."""
        return np.cumsum(self.coeffs)

    breakpoints = ()

    def cumulative(self, t):
        B, _ = bernstein_basis(t, self.degree)
        return B @ self.params

    def hazard(self, t):
        _, b = bernstein_basis(t, self.degree)
        return b @ self.params

    def log_cumulative(self, t):
        return _log_mix(bernstein_basis(t, self.degree)[0], _log_params(self.coeffs))

    def log_hazard(self, t):
        return _log_mix(bernstein_basis(t, self.degree)[1], _log_params(self.coeffs))


def cumulative_baseline(b, t):
    """``Lambda_0(t)`` for any baseline object."""
    return b.cumulative(t)


def baseline_hazard(b, t):
    """``lambda_0(t) = d Lambda_0 / dt`` for any baseline object."""
    return b.hazard(t)


@dataclass(frozen=True)
class ExponentialBaseline:
    rate: float
    breakpoints = ()

    @property
    def params(self):
        return np.array([self.rate])

    def cumulative(self, t):
        return self.rate * _as_time(t)

    def hazard(self, t):
        return np.full_like(_as_time(t), self.rate)

    def log_cumulative(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.rate) + np.log(_as_time(t))

    def log_hazard(self, t):
        with np.errstate(divide="ignore"):
            return np.full_like(_as_time(t), np.log(self.rate))


@dataclass(frozen=True)
class WeibullBaseline:
    """``Lambda_0(t) = scale * t ** shape``."""

    scale: float
    shape: float
    breakpoints = ()

    @property
    def params(self):
        return np.array([self.scale, self.shape])

    def cumulative(self, t):
        return self.scale * np.power(_as_time(t), self.shape)

    def hazard(self, t):
        t = _as_time(t)
        with np.errstate(divide="ignore"):
            return self.scale * self.shape * np.power(t, self.shape - 1.0)

    def log_cumulative(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.scale) + xlogy(self.shape, _as_time(t))

    def log_hazard(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.scale * self.shape) + xlogy(self.shape - 1.0, _as_time(t))


def piecewise_basis(t, pieces: int) -> tuple[np.ndarray, np.ndarray]:
    """Exposure in and indicator of each of ``pieces`` equal-width intervals."""
    t = _as_time(t)
    edges = np.linspace(0.0, 1.0, pieces + 1)
    tt = t[..., None]
    cum = np.clip(tt - edges[:-1], 0.0, edges[1:] - edges[:-1])
    idx = np.minimum((t * pieces).astype(int), pieces - 1)
    ind = np.zeros(t.shape + (pieces,))
    np.put_along_axis(ind, idx[..., None], 1.0, axis=-1)
    return cum, ind


@dataclass(frozen=True)
class PiecewiseConstantBaseline:
    rates: tuple

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    @property
    def params(self):
        return np.array(self.rates)

    @property
    def breakpoints(self):
        n = len(self.rates)
        return tuple(np.arange(1, n) / n)

    def cumulative(self, t):
        return piecewise_basis(t, len(self.rates))[0] @ self.params

    def hazard(self, t):
        return piecewise_basis(t, len(self.rates))[1] @ self.params

    def log_cumulative(self, t):
        return _log_mix(piecewise_basis(t, len(self.rates))[0], _log_params(self.rates))

    def log_hazard(self, t):
        return _log_mix(piecewise_basis(t, len(self.rates))[1], _log_params(self.rates))


KINDS = ("bernstein", "exponential", "weibull", "piecewise")


@dataclass(frozen=True)
class BaselineFamily:
    """A parametric family of baselines with positive parameter vectors.

    ``size`` is the Bernstein degree or the number of constant pieces; it is
    ignored for exponential and Weibull baselines.
    """

    kind: str = "bernstein"
    size: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}; choose from {KINDS}")
        if self.size < 1:
            raise ValueError("baseline size must be positive")

    @property
    def n_params(self) -> int:
        return {"exponential": 1, "weibull": 2}.get(self.kind, self.size)

    @property
    def linear(self) -> bool:
        return self.kind != "weibull"

    def param_names(self) -> list[str]:
        if self.kind == "weibull":
            return ["scale", "shape"]
        if self.kind == "exponential":
            return ["rate"]
        return [str(m) for m in range(1, self.size + 1)]

    def build(self, params):
        p = np.asarray(params, dtype=float)
        if self.kind == "bernstein":
            return BernsteinBaseline(tuple(p))
        if self.kind == "exponential":
            return ExponentialBaseline(float(p[0]))
        if self.kind == "weibull":
            return WeibullBaseline(float(p[0]), float(p[1]))
        return PiecewiseConstantBaseline(tuple(p))

    def precompute(self, t):
        """Time-only quantities reused across parameter values."""
        t = _as_time(t)
        if self.kind == "bernstein":
            return bernstein_basis(t, self.size)
        if self.kind == "exponential":
            return t[..., None], np.ones(t.shape + (1,))
        if self.kind == "piecewise":
            return piecewise_basis(t, self.size)
        with np.errstate(divide="ignore"):
            return t, np.log(t)

    def evaluate(self, cache, params) -> tuple[np.ndarray, np.ndarray]:
        """``(Lambda_0, lambda_0)`` at the precomputed times."""
        if self.linear:
            B, b = cache
            return B @ params, b @ params
        t, _ = cache
        scale, shape = params
        with np.errstate(divide="ignore"):
            cum = scale * np.exp(xlogy(shape, t))
            haz = scale * shape * np.exp(xlogy(shape - 1.0, t))
        return cum, haz

    def log_evaluate(self, cache, log_params) -> tuple[np.ndarray, np.ndarray]:
        """``(log Lambda_0, log lambda_0)`` from log parameters; finite wherever
        the true values are, even when the natural-scale products overflow."""
        lp = np.asarray(log_params, dtype=float)
        if self.linear:
            B, b = cache
            return _log_mix(B, lp), _log_mix(b, lp)
        t, _ = cache
        shape = np.exp(lp[1])
        with np.errstate(divide="ignore"):
            return lp[0] + xlogy(shape, t), lp[0] + lp[1] + xlogy(shape - 1.0, t)

    def initial_params(self, rate: float) -> np.ndarray:
        """Parameters giving (approximately) a constant hazard ``rate``."""
        rate = max(float(rate), 1e-8)
        if self.kind == "weibull":
            return np.array([rate, 1.0])
        if self.kind == "exponential":
            return np.array([rate])
        if self.kind == "piecewise":
            return np.full(self.size, rate)
        # equal increments reproduce Lambda_0(t) = rate * t exactly
        return np.full(self.size, rate / self.size)
