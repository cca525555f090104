"""Competing-risk gamma-frailty model.

Cause ``k`` (1-based, matching the event codes in pedigree files) has hazard

    lambda_k(t | Z, xi_k) = lambda_{0,k}(t) * xi_k * exp(beta_k . Z)

with ``Z`` built from carrier status ``g`` and sex ``x`` (1 = male) according
to the cause's covariate terms, and ``xi_k ~ Gamma(nu_k, nu_k)`` shared by a
family. Causes covered by the structural constraint have identically zero
hazard for males.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baseline import BaselineFamily
from .errors import QuadratureError

TERMS = ("G", "X", "GX")


@dataclass(frozen=True)
class CauseSpec:
    code: int
    name: str = ""
    terms: tuple[str, ...] = ("G", "X", "GX")

    def __post_init__(self):
        bad = [t for t in self.terms if t not in TERMS]
        if bad:
            raise ValueError(f"unknown covariate terms {bad}; allowed {TERMS}")
        object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True)
class StructuralConstraint:
    """Causes whose hazard is identically zero for male subjects."""

    zero_for_male: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "zero_for_male", frozenset(int(k) for k in self.zero_for_male))

    def fires(self, k: int, g, x):
        """True where cause ``k`` has structurally zero hazard."""
        x = np.asarray(x)
        if k in self.zero_for_male:
            return (x == 1) & np.ones_like(np.asarray(g), dtype=bool)
        return np.zeros(np.broadcast(x, np.asarray(g)).shape, dtype=bool)


@dataclass(frozen=True)
class ModelSpec:
    causes: tuple[CauseSpec, ...]
    baseline: BaselineFamily = field(default_factory=BaselineFamily)
    constraint: StructuralConstraint = field(default_factory=StructuralConstraint)
    frailty: bool = True

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))
        codes = [c.code for c in self.causes]
        if codes != list(range(1, len(codes) + 1)):
            raise ValueError("causes must be coded 1..K in order")
        if not codes:
            raise ValueError("at least one cause is required")

    @property
    def K(self) -> int:
        return len(self.causes)

    def cause(self, k: int) -> CauseSpec:
        if not (isinstance(k, (int, np.integer)) and 1 <= k <= self.K):
            raise ValueError(f"invalid cause index {k!r}; expected 1..{self.K}")
        return self.causes[k - 1]

    def design(self, k: int, g, x) -> np.ndarray:
        """Covariate vector(s) ``Z`` for cause ``k``; shape ``broadcast(g, x) + (p_k,)``."""
        g = np.asarray(g, dtype=float)
        x = np.asarray(x, dtype=float)
        g, x = np.broadcast_arrays(g, x)
        cols = {"G": g, "X": x, "GX": g * x}
        terms = self.cause(k).terms
        if not terms:
            return np.zeros(g.shape + (0,))
        return np.stack([cols[t] for t in terms], axis=-1)


def lfs_spec(degree: int = 5, baseline: str = "bernstein", frailty: bool = True) -> ModelSpec:
    """Breast (no male hazard, genotype only), sarcoma, other cancers."""
    return ModelSpec(
        causes=(
            CauseSpec(1, "breast", ("G",)),
            CauseSpec(2, "sarcoma", ("G", "X", "GX")),
            CauseSpec(3, "other", ("G", "X", "GX")),
        ),
        baseline=BaselineFamily(baseline, degree),
        constraint=StructuralConstraint(frozenset({1})),
        frailty=frailty,
    )


def simulation_spec(degree: int = 3, baseline: str = "bernstein", frailty: bool = True) -> ModelSpec:
    """Two causes with genotype-only covariates, as in the simulation design."""
    return ModelSpec(
        causes=(CauseSpec(1, "cause1", ("G",)), CauseSpec(2, "cause2", ("G",))),
        baseline=BaselineFamily(baseline, degree),
        frailty=frailty,
    )


@dataclass(frozen=True)
class CauseParams:
    beta: np.ndarray
    baseline: object
    nu: float = np.inf

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())
        if not self.nu > 0:
            raise ValueError(f"frailty precision must be positive, got {self.nu}")


@dataclass(frozen=True)
class ModelParams:
    spec: ModelSpec
    causes: tuple[CauseParams, ...]
    time_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))
        if len(self.causes) != self.spec.K:
            raise ValueError("one CauseParams per cause is required")
        if not self.time_scale > 0:
            raise ValueError("time_scale must be positive")
        for k, c in enumerate(self.causes, start=1):
            if c.beta.size != len(self.spec.cause(k).terms):
                raise ValueError(f"cause {k}: beta has {c.beta.size} entries, design has "
                                 f"{len(self.spec.cause(k).terms)}")

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def constraint(self) -> StructuralConstraint:
        return self.spec.constraint

    @classmethod
    def from_arrays(cls, spec, betas, baseline_params, nus, time_scale=1.0):
        causes = [
            CauseParams(b, spec.baseline.build(p), float(n) if spec.frailty else np.inf)
            for b, p, n in zip(betas, baseline_params, nus)
        ]
        return cls(spec, tuple(causes), time_scale)

    def rescale(self, age):
        return np.asarray(age, dtype=float) / self.time_scale


def _linpred(m: ModelParams, k: int, g, x):
    return m.spec.design(k, g, x) @ m.causes[k - 1].beta


def _log_xi(xi_k):
    xi_k = np.asarray(xi_k, dtype=float)
    if np.any(~(xi_k >= 0)):
        raise ValueError("frailty must be nonnegative")
    with np.errstate(divide="ignore"):
        return np.log(xi_k)


def _log_hazard_star(m, k, g, x, t):
    """``log(exp(beta Z) lambda_{0,k}(t))``; ``-inf`` where the cause is structurally absent."""
    out = m.causes[k - 1].baseline.log_hazard(t) + _linpred(m, k, g, x)
    return np.where(m.constraint.fires(k, g, x), -np.inf, out)


def _log_cumhaz_star(m, k, g, x, t):
    """``log Lambda*_k = log(exp(beta Z) Lambda_{0,k}(t))``."""
    out = m.causes[k - 1].baseline.log_cumulative(t) + _linpred(m, k, g, x)
    return np.where(m.constraint.fires(k, g, x), -np.inf, out)


def log_cause_hazard(m: ModelParams, k: int, g, x, xi_k, t):
    """``log lambda_k(t | Z, xi_k)``, computed without forming the product."""
    m.spec.cause(k)
    return _log_hazard_star(m, k, g, x, t) + _log_xi(xi_k)


def cause_hazard(m: ModelParams, k: int, g, x, xi_k, t):
    """Conditional hazard ``lambda_k(t | Z, xi_k)``."""
    with np.errstate(over="ignore"):
        return np.exp(log_cause_hazard(m, k, g, x, xi_k, t))


def conditional_cumulative_hazard(m: ModelParams, k: int, g, x, xi_k, t):
    m.spec.cause(k)
    with np.errstate(over="ignore"):
        return np.exp(_log_cumhaz_star(m, k, g, x, t) + _log_xi(xi_k))


def _cumhaz_star(m, k, g, x, t):
    """Frailty-free cumulative hazard ``Lambda*_k = exp(beta Z) Lambda_{0,k}``."""
    with np.errstate(over="ignore"):
        return np.exp(_log_cumhaz_star(m, k, g, x, t))


def _log_frailty_survival(nu, log_cum):
    if np.isinf(nu):
        with np.errstate(over="ignore"):
            return -np.exp(log_cum)
    # -nu log(1 + Lambda*/nu), stable for any size of Lambda*
    return -nu * np.logaddexp(0.0, log_cum - np.log(nu))


def marginal_cause_survival(m: ModelParams, k: int, g, x, t):
    """``S_k(t | Z) = (nu / (nu + Lambda*_k(t)))^nu`` (``exp(-Lambda*)`` without frailty)."""
    m.spec.cause(k)
    return np.exp(_log_frailty_survival(m.causes[k - 1].nu, _log_cumhaz_star(m, k, g, x, t)))


def _log_overall_survival(m, g, x, t):
    return sum(_log_frailty_survival(m.causes[k - 1].nu, _log_cumhaz_star(m, k, g, x, t))
               for k in range(1, m.K + 1))


def overall_survival(m: ModelParams, g, x, t):
    return np.exp(_log_overall_survival(m, g, x, t))


def _singularity_power(m: ModelParams) -> float:
    """Substitution exponent removing a ``t^(a-1)`` hazard singularity at 0."""
    worst = 0.0
    for c in m.causes:
        shape = getattr(c.baseline, "shape", 1.0)
        worst = min(worst, shape - 1.0)
    return 1.0 / (1.0 + worst)


def _log_penetrance_integrand(m, k, g, x, u):
    nu = m.causes[k - 1].nu
    log_dens = _log_hazard_star(m, k, g, x, u)
    if not np.isinf(nu):
        # frailty-marginal hazard: nu / (nu + Lambda*) * lambda*
        log_dens = log_dens + np.log(nu) - np.logaddexp(np.log(nu), _log_cumhaz_star(m, k, g, x, u))
    return log_dens + _log_overall_survival(m, g, x, u)


def _head_share(m, k, g, x, b):
    """``q_k`` on ``[0, b]`` when the hazards are proportional there: the
    failure probability ``1 - S(b)`` split by marginal cumulative hazards."""
    cum = np.stack([-_log_frailty_survival(m.causes[j - 1].nu, _log_cumhaz_star(m, j, g, x, b))
                    for j in range(1, m.K + 1)])
    total = cum.sum(axis=0)
    with np.errstate(invalid="ignore"):
        return np.where(total > 0, -np.expm1(-total) * cum[k - 1] / total, 0.0)


def _gauss_legendre(m, k, g, x, t, nodes, grading=0, head=False):
    """Composite rule on ``[0, t]``; ``grading`` adds panels at ``t / 2**j``.

    With ``head`` the innermost panel, too narrow to resolve in double
    precision, is assigned its probability analytically.
    """
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    p = _singularity_power(m)
    edges = sorted({b for c in m.causes for b in c.baseline.breakpoints})
    total = np.zeros_like(t)
    a = np.zeros_like(t)[..., None]
    first = True
    # breakpoints and graded cuts merged per element of t
    floor = np.minimum(t, _FLOOR)
    cuts = [np.full_like(t, e) for e in edges] + [np.maximum(t * 2.0 ** -j, floor) for j in range(grading, 0, -1)]
    cuts = np.sort(np.stack(cuts + [np.ones_like(t)], axis=-1), axis=-1)
    for i in range(cuts.shape[-1]):
        b = np.minimum(cuts[..., i], t)[..., None]
        b = np.maximum(b, a)
        if head and first:
            total = total + _head_share(m, k, g, x, b[..., 0])
            a = b
            first = False
            continue
        if p == 1.0 or not first:
            u = 0.5 * (b - a) * (xs + 1.0) + a
            jac = 0.5 * (b - a)
        else:
            # u = b * v**p on the first panel
            v = 0.5 * (xs + 1.0)
            u = b * v**p
            jac = 0.5 * b * p * v ** (p - 1.0)
        # weights join the log so a density beyond the double range on a
        # narrow panel still yields its bounded contribution; empty panels
        # (t = 0) meet an infinite hazard at u = 0 and contribute nothing
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            log_vals = _log_penetrance_integrand(m, k, g, x, u) + np.log(ws * jac)
            total = total + np.sum(np.where(jac > 0, np.exp(log_vals), 0.0), axis=-1)
        a = b
        first = False
    return total


#: Graded-panel refinements tried when the plain rule does not converge.
_GRADINGS = (0, 8, 16, 32, 52)


#: Deepest grading; panels end at 2**-1000 so every node is a normal double.
_MAX_DEPTH = 1000
_FLOOR = 2.0 ** -_MAX_DEPTH


def _grading_depth(m, g, x, t, level=1e-3):
    """Halvings of ``t`` needed before the total cumulative hazard falls below
    ``level``; extreme parameters can push this well past 52. ``None`` when
    even the deepest grading does not get there."""
    t = np.max(t) if np.size(t) else 0.0
    if t <= 0:
        return 0
    j = np.arange(0, _MAX_DEPTH + 1)
    u = np.maximum(np.ldexp(t, -j), min(t, _FLOOR))
    with np.errstate(over="ignore", invalid="ignore"):
        total = sum(_cumhaz_star(m, k, g, x, u) for k in range(1, m.K + 1))
    ok = np.flatnonzero(np.asarray(total) <= level)
    return int(ok[0]) if ok.size else None


def cause_penetrance(m: ModelParams, k: int, g, x, t, nodes: int = 64, tol: float = 1e-6):
    """Cancer-specific penetrance ``q_k(t | Z) = Pr(T <= t, D = k | Z)``.

    The frailty-marginal integrand is integrated by Gauss-Legendre quadrature
    on ``[0, t]`` (split at baseline breakpoints); the difference to a rule
    with twice the nodes is the error estimate. Large hazards concentrate the
    integrand near 0, in which case panels graded geometrically towards 0
    are added until the estimate converges.
    """
    m.spec.cause(k)
    t = np.asarray(t, dtype=float)
    if np.any(~((t >= 0) & (t <= 1))):
        raise ValueError("rescaled time must lie in [0, 1]")
    flat = np.atleast_1d(t)
    deep = _grading_depth(m, g, x, flat)
    head = deep is None
    deep = _MAX_DEPTH if head else min(deep + 8, _MAX_DEPTH)
    for grading in _GRADINGS + ((deep,) if deep > _GRADINGS[-1] else ()):
        q = _gauss_legendre(m, k, g, x, flat, nodes, grading, head and grading == deep)
        q2 = _gauss_legendre(m, k, g, x, flat, 2 * nodes, grading, head and grading == deep)
        err = float(np.max(np.abs(q2 - q))) if q.size else 0.0
        if err <= tol:
            break
    else:
        raise QuadratureError(f"penetrance quadrature for cause {k} did not converge", err)
    q = np.clip(q2, 0.0, 1.0)
    return q.reshape(t.shape) if t.ndim else float(q[0])


def overall_penetrance(m: ModelParams, g, x, t, nodes: int = 64, tol: float = 1e-6):
    """``q(t | Z) = sum_k q_k(t | Z)``."""
    return sum(cause_penetrance(m, k, g, x, t, nodes, tol) for k in range(1, m.K + 1))


def individual_log_likelihood(m: ModelParams, g: int, x: int, time: float, cause: int, xi) -> float:
    """``sum_k [Delta_k log lambda_k(Y) - Lambda_k(Y)]`` for one subject.

    Returns ``-inf`` when an observed event has structurally zero hazard.
    """
    lx = _log_xi(np.broadcast_to(np.asarray(xi, dtype=float), (m.K,)))
    out = 0.0
    for k in range(1, m.K + 1):
        m.spec.cause(k)
        with np.errstate(over="ignore"):
            out -= float(np.exp(_log_cumhaz_star(m, k, g, x, time) + lx[k - 1]))
        if cause == k:
            lam = float(_log_hazard_star(m, k, g, x, time) + lx[k - 1])
            if not lam > -np.inf:
                return -np.inf
            out += lam
    return out
