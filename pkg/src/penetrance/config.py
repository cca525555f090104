"""Run configuration.

An INI file (``configparser`` grammar) with optional sections ``[run]``,
``[model]``, ``[sampler]``, ``[simulate]``, ``[predict]`` and ``[evaluate]``.
Unknown keys are rejected. A single run seed feeds every module through
named sub-streams; a section may pin its own ``seed`` instead. The only
environment override is ``PENETRANCE_SEED``.

Example::

    [run]
    seed = 7

    [model]
    preset = simulation        ; or lfs
    baseline = bernstein
    degree = 3
    frailty = true
    correct_ascertainment = true
    ascertainment_cause = 2

    [sampler]
    iterations = 11000
    burn_in = 1000
    thin = 1
    nu_prior = 0.01, 0.01
    gamma_prior = flat
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .ascertainment import AscertainmentRule
from .baseline import KINDS, BaselineFamily
from .errors import ConfigError
from .genetics import DEFAULT_ALLELE_FREQUENCY, allele_frequency_for_prevalence
from .inference import PriorSpec, SamplerConfig
from .riskmodel import CauseSpec, ModelSpec, StructuralConstraint, lfs_spec, simulation_spec
from .simulate import SimulationConfig

__all__ = ["ModelConfig", "PredictConfig", "EvaluateConfig", "RunConfig", "load_config", "derive_seed"]

PRESETS = ("simulation", "lfs")


def derive_seed(seed: int, stream: str) -> int:
    """Independent 63-bit seed for a named sub-stream of ``seed``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stream.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class ModelConfig:
    preset: str = "simulation"
    baseline: str = "bernstein"
    degree: int | None = None
    frailty: bool = True
    terms: tuple | None = None
    zero_for_male: tuple | None = None
    allele_frequency: float | None = None
    correct_ascertainment: bool = True
    ascertainment_cause: int = 2
    censor_age: float | None = None
    time_scale: float | None = None

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown model preset {self.preset!r}; choose from {PRESETS}")
        if self.baseline not in KINDS:
            raise ConfigError(f"unknown baseline {self.baseline!r}; choose from {KINDS}")
        if self.degree is not None and self.degree < 1:
            raise ConfigError("degree must be positive")
        if self.allele_frequency is not None and not 0 < self.allele_frequency < 1:
            raise ConfigError("allele_frequency must lie in (0, 1)")

    def spec(self) -> ModelSpec:
        if self.preset == "lfs":
            base = lfs_spec(self.degree or 5, self.baseline, self.frailty)
        else:
            base = simulation_spec(self.degree or 3, self.baseline, self.frailty)
        causes = base.causes
        if self.terms is not None:
            causes = tuple(CauseSpec(k, f"cause{k}", t) for k, t in enumerate(self.terms, start=1))
        constraint = base.constraint
        if self.zero_for_male is not None:
            constraint = StructuralConstraint(frozenset(self.zero_for_male))
        try:
            return ModelSpec(causes, base.baseline, constraint, self.frailty)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def prior_allele_frequency(self) -> float:
        if self.allele_frequency is not None:
            return self.allele_frequency
        if self.preset == "simulation":
            # matches the simulator's carrier frequency among candidate probands
            return allele_frequency_for_prevalence(SimulationConfig().proband_carrier_frequency)
        return DEFAULT_ALLELE_FREQUENCY

    @property
    def effective_censor_age(self) -> float | None:
        """Administrative censoring age; the LFS preset censors at 75 unless set."""
        if self.censor_age is not None:
            return self.censor_age
        return 75.0 if self.preset == "lfs" else None

    def rule(self) -> AscertainmentRule:
        return AscertainmentRule(self.ascertainment_cause if self.correct_ascertainment else None)


@dataclass(frozen=True)
class PredictConfig:
    ages: tuple = ()
    frailty_mode: str = "gamma"
    level: float = 0.95
    max_draws: int | None = 200


@dataclass(frozen=True)
class EvaluateConfig:
    age: float | None = None
    cause: int = 2
    repetitions: int = 20
    max_draws: int | None = 50
    level: float = 0.95
    frailty_mode: str = "gamma"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    priors: PriorSpec = field(default_factory=PriorSpec)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    simulate: SimulationConfig = field(default_factory=SimulationConfig)
    predict: PredictConfig = field(default_factory=PredictConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    checkpoint_every: int = 1000

    def to_dict(self) -> dict:
        sim = asdict(self.simulate)
        sim.pop("template", None)
        return {
            "seed": self.seed,
            "model": asdict(self.model),
            "priors": asdict(self.priors),
            "sampler": asdict(self.sampler),
            "simulate": sim,
            "predict": asdict(self.predict),
            "evaluate": asdict(self.evaluate),
            "checkpoint_every": self.checkpoint_every,
        }

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=_json_default)
        return hashlib.sha256(text.encode()).hexdigest()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not serialisable: {type(o)}")


# ------------------------------------------------------------------ parsing
def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _grid(text: str) -> tuple:
    """``a:b:step`` range (inclusive) or comma list."""
    if ":" in text:
        a, b, step = (float(v) for v in text.split(":"))
        n = int(round((b - a) / step))
        return tuple(float(a + i * step) for i in range(n + 1))
    return _floats(text)


def _opt(conv):
    def f(text):
        return None if text.strip().lower() in ("", "none", "auto") else conv(text)
    return f


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _terms(text: str) -> tuple:
    return tuple(tuple(t.strip() for t in part.split(",") if t.strip()) for part in text.split(";"))


def _gamma_prior(text: str):
    return None if text.strip().lower() in ("flat", "none", "") else _floats(text)


_SCHEMA = {
    "run": {"seed": int, "checkpoint_every": int},
    "model": {
        "preset": str, "baseline": str, "degree": _opt(int), "bernstein_degree": _opt(int), "frailty": _bool,
        "terms": _opt(_terms),
        "zero_for_male": _opt(_ints), "allele_frequency": _opt(float), "correct_ascertainment": _bool,
        "ascertainment_cause": int, "censor_age": _opt(float), "time_scale": _opt(float),
    },
    "sampler": {
        "iterations": int, "burn_in": int, "thin": int, "seed": int, "chains": int, "target_accept": float,
        "initial_scale": float, "threads": int, "beta_prior_sd": float, "nu_prior": _floats,
        "gamma_prior": _gamma_prior,
    },
    "simulate": {
        "family_count": int, "betas": _floats, "baseline_rates": _floats, "frailty_precision": _opt(float),
        "censoring_rate": float, "proband_carrier_frequency": float, "missing_fraction": float,
        "ascertainment_cause": int, "seed": int, "max_attempts": int,
    },
    "predict": {"ages": _grid, "frailty_mode": str, "level": float, "max_draws": _opt(int)},
    "evaluate": {"age": _opt(float), "cause": int, "repetitions": int, "max_draws": _opt(int), "level": float,
                 "frailty_mode": str},
}


def _read_sections(path) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    out = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown config section [{sec}]")
        vals = {}
        for key, raw in cp.items(sec):
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
            try:
                vals[key] = _SCHEMA[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from None
        out[sec] = vals
    return out


def load_config(path=None, seed: int | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a config file (or defaults) and resolve seeds.

    Seed precedence: ``seed`` argument, then ``PENETRANCE_SEED``, then
    ``[run] seed``. ``overrides`` maps ``section -> {key: value}`` with
    already-parsed values and wins over the file.
    """
    sec = _read_sections(path)
    for s, kv in (overrides or {}).items():
        sec.setdefault(s, {}).update(kv)
    run = sec.get("run", {})
    env = os.environ.get("PENETRANCE_SEED")
    if seed is None and env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"PENETRANCE_SEED must be an integer, got {env!r}") from None
    run_seed = int(seed if seed is not None else run.get("seed", 0))
    try:
        md = dict(sec.get("model", {}))
        if "bernstein_degree" in md:
            alias = md.pop("bernstein_degree")
            md.setdefault("degree", alias)
        model = ModelConfig(**md)
        sm = dict(sec.get("sampler", {}))
        priors = PriorSpec(
            beta_sd=sm.pop("beta_prior_sd", 10.0),
            gamma_prior=sm.pop("gamma_prior", None),
            nu_prior=sm.pop("nu_prior", (0.01, 0.01)),
        )
        sm.setdefault("seed", derive_seed(run_seed, "sampler"))
        sampler = SamplerConfig(**sm)
        sim = dict(sec.get("simulate", {}))
        sim.setdefault("seed", derive_seed(run_seed, "simulate"))
        simulate = SimulationConfig(**sim)
        predict = PredictConfig(**sec.get("predict", {}))
        evaluate = EvaluateConfig(**sec.get("evaluate", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if predict.frailty_mode not in ("gamma", "fixed", "fitted"):
        raise ConfigError("predict frailty_mode must be gamma, fixed or fitted")
    return RunConfig(run_seed, model, priors, sampler, simulate, predict, evaluate,
                     int(run.get("checkpoint_every", 1000)))
