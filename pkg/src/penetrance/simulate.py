"""Synthetic ascertained family cohorts with two competing cancers.

Each family is built on a fixed three-generation, 30-member template. A
candidate proband (carrier with small probability) is drawn with family
frailties until the proband's first event is the qualifying cause; relatives
then receive carrier status by the simple 50% rules of the design, event
times from the same constant-baseline frailty model, and half of the
non-proband genotypes are hidden.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .pedigree import Individual, Pedigree, Phenotype

__all__ = [
    "TEMPLATE",
    "TemplateMember",
    "SimulationConfig",
    "event_time_sample",
    "simulate_family",
    "simulate_cohort",
    "candidate_prevalence",
]


@dataclass(frozen=True)
class TemplateMember:
    id: str
    sex: str
    father: str | None = None
    mother: str | None = None


def _template() -> tuple[TemplateMember, ...]:
    T = TemplateMember
    rows = [
        # first generation: proband's parents and the spouse's parents
        T("3", "M"), T("4", "F"), T("5", "M"), T("6", "F"),
        # second generation
        T("1", "M", "3", "4"), T("2", "F", "5", "6"),
        T("11", "M", "3", "4"), T("12", "F", "3", "4"),
        T("13", "F"), T("14", "M"),
        T("15", "F", "5", "6"), T("16", "M", "5", "6"),
        T("17", "M"), T("18", "F"),
    ]
    rows += [T(str(i), "M" if i % 2 else "F", "1", "2") for i in (7, 8, 9, 10)]
    rows += [T(str(i), "M" if i % 2 else "F", "11", "13") for i in (19, 20, 21)]
    rows += [T(str(i), "M" if i % 2 else "F", "14", "12") for i in (22, 23, 24)]
    rows += [T(str(i), "M" if i % 2 else "F", "17", "15") for i in (25, 26, 27)]
    rows += [T(str(i), "M" if i % 2 else "F", "16", "18") for i in (28, 29, 30)]
    return tuple(sorted(rows, key=lambda r: int(r.id)))


#: Canonical 30-member template; member "1" is the proband, "3"/"4" his
#: parents, "7".."10" his children, "11"/"12" his siblings whose children are
#: "19".."21" and "22".."24"; everyone else is unrelated to the proband.
TEMPLATE = _template()

_PARENTS = ("3", "4")
_FIRST_DEGREE = ("7", "8", "9", "10", "11", "12")
_NIECES = {"11": ("19", "20", "21"), "12": ("22", "23", "24")}


@dataclass(frozen=True)
class SimulationConfig:
    """Simulation design; defaults reproduce the two-cancer study design."""

    family_count: int = 200
    betas: tuple = (4.0, 10.0)
    baseline_rates: tuple = (0.1, 0.0005)
    frailty_precision: float | None = 0.25
    censoring_rate: float = 2.0
    proband_carrier_frequency: float = 0.0001
    missing_fraction: float = 0.5
    ascertainment_cause: int = 2
    seed: int = 0
    batch_size: int = 8192
    max_attempts: int = 10_000_000
    template: tuple = field(default=TEMPLATE, repr=False)

    def __post_init__(self):
        if self.family_count < 1:
            raise ConfigError("family_count must be positive")
        if len(self.betas) != len(self.baseline_rates):
            raise ConfigError("betas and baseline_rates must have one entry per cause")
        if any(r <= 0 for r in self.baseline_rates):
            raise ConfigError("baseline rates must be positive")
        if self.frailty_precision is not None and not self.frailty_precision > 0:
            raise ConfigError("frailty precision must be positive")
        if not self.censoring_rate > 0:
            raise ConfigError("censoring rate must be positive")
        if not 0 <= self.proband_carrier_frequency <= 1:
            raise ConfigError("proband carrier frequency must lie in [0, 1]")
        if not 0 <= self.missing_fraction <= 1:
            raise ConfigError("missing fraction must lie in [0, 1]")
        if not 1 <= self.ascertainment_cause <= len(self.betas):
            raise ConfigError("ascertainment cause must index one of the causes")
        if self.batch_size < 1 or self.max_attempts < 1:
            raise ConfigError("batch_size and max_attempts must be positive")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "baseline_rates", tuple(float(r) for r in self.baseline_rates))

    @property
    def n_causes(self) -> int:
        return len(self.betas)


def event_time_sample(g, betas, baseline_rates, xi, censoring_rate: float, rng: np.random.Generator):
    """Competing exponential event times with independent exponential censoring.

    Parameters
    ----------
    g : array_like of {0, 1}
        Carrier status per subject.
    betas, baseline_rates : sequence of float
        Per-cause log hazard ratio and constant baseline hazard.
    xi : array_like
        Frailties, shape ``(n_causes,)`` or ``(n_subjects, n_causes)``.
    censoring_rate : float
        Rate of the exponential censoring time; ``inf`` censors at time 0.

    Returns
    -------
    time : ndarray
        ``min(T_1, ..., T_K, C)``.
    cause : ndarray of int
        Index (1-based) of the first event, or 0 when censoring came first.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    n = g.shape[0]
    K = len(betas)
    rates = np.asarray(baseline_rates, dtype=float) * np.exp(np.outer(g, betas)) * np.broadcast_to(xi, (n, K))
    with np.errstate(divide="ignore", over="ignore"):
        times = rng.standard_exponential((n, K)) / rates
    if np.isinf(censoring_rate):
        cens = np.zeros(n)
    else:
        cens = rng.standard_exponential(n) / censoring_rate
    first = np.argmin(times, axis=1)
    t_ev = times[np.arange(n), first]
    event = t_ev < cens
    return np.where(event, t_ev, cens), np.where(event, first + 1, 0)


def _draw_frailty(cfg: SimulationConfig, rng, size):
    if cfg.frailty_precision is None:
        return np.ones((size, cfg.n_causes))
    nu = cfg.frailty_precision
    return rng.gamma(nu, 1.0 / nu, size=(size, cfg.n_causes))


def _draw_proband(cfg: SimulationConfig, rng):
    """Rejection-sample a candidate proband whose first event is the qualifying cause."""
    tried = 0
    while tried < cfg.max_attempts:
        n = min(cfg.batch_size, cfg.max_attempts - tried)
        g = (rng.random(n) < cfg.proband_carrier_frequency).astype(int)
        xi = _draw_frailty(cfg, rng, n)
        t, d = event_time_sample(g, cfg.betas, cfg.baseline_rates, xi, cfg.censoring_rate, rng)
        hit = np.flatnonzero(d == cfg.ascertainment_cause)
        tried += n
        if hit.size:
            i = hit[0]
            return int(g[i]), xi[i], float(t[i])
    raise NumericalError(f"no qualifying proband after {cfg.max_attempts} candidates; "
                         f"the ascertainment event is (nearly) impossible under this configuration")


def _relative_genotypes(g_proband: int, rng) -> dict[str, int]:
    geno = {m.id: 0 for m in TEMPLATE}
    geno["1"] = g_proband
    if g_proband:
        carrier_parent = _PARENTS[int(rng.integers(2))]
        geno[carrier_parent] = 1
        for j in _FIRST_DEGREE:
            geno[j] = int(rng.random() < 0.5)
        for parent, kids in _NIECES.items():
            for j in kids:
                geno[j] = int(rng.random() < 0.5) if geno[parent] else 0
    return geno


def simulate_family(cfg: SimulationConfig, rng: np.random.Generator, family_id: str) -> Pedigree:
    """One ascertained family on the canonical template."""
    g1, xi, t1 = _draw_proband(cfg, rng)
    geno = _relative_genotypes(g1, rng)
    others = [m for m in cfg.template if m.id != "1"]
    g = np.array([geno[m.id] for m in others])
    times, causes = event_time_sample(g, cfg.betas, cfg.baseline_rates, xi, cfg.censoring_rate, rng)
    n_hide = int(np.floor(cfg.missing_fraction * len(others)))
    hidden = set(rng.choice(len(others), size=n_hide, replace=False).tolist()) if n_hide else set()
    pheno = {"1": Phenotype(t1, cfg.ascertainment_cause)}
    observed = {"1": g1}
    for j, m in enumerate(others):
        pheno[m.id] = Phenotype(float(times[j]), int(causes[j]))
        observed[m.id] = None if j in hidden else int(g[j])
    members = tuple(
        Individual(m.id, family_id, m.father, m.mother, m.sex, observed[m.id], pheno[m.id], m.id == "1")
        for m in cfg.template
    )
    return Pedigree(family_id, members)


def simulate_cohort(cfg: SimulationConfig = SimulationConfig()) -> list[Pedigree]:
    """``cfg.family_count`` ascertained families, deterministic given ``cfg.seed``.

    Each family uses its own child seed, so the cohort does not depend on
    the order in which families are generated.
    """
    width = len(str(cfg.family_count))
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.family_count)
    return [simulate_family(cfg, np.random.default_rng(s), f"F{i + 1:0{width}d}") for i, s in enumerate(seeds)]


def candidate_prevalence(cfg: SimulationConfig, n: int = 1_000_000, seed: int | None = None) -> np.ndarray:
    """Fraction of unascertained candidate probands whose observed event is each cause.

    Returns an array of length ``n_causes`` estimating ``Pr(T <= C, D = k)``.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    g = (rng.random(n) < cfg.proband_carrier_frequency).astype(int)
    xi = _draw_frailty(cfg, rng, n)
    _, d = event_time_sample(g, cfg.betas, cfg.baseline_rates, xi, cfg.censoring_rate, rng)
    return np.array([(d == k).mean() for k in range(1, cfg.n_causes + 1)])
