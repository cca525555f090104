"""Command-line entry point: ``penetrance {simulate,fit,predict,evaluate}``.

Exit codes: 0 success, 2 usage, 3 invalid input or configuration,
4 numerical failure. Every command writes a JSON manifest next to its
outputs holding the package version, the resolved seed and configuration,
and SHA-256 digests of inputs and outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, derive_seed, load_config
from .errors import NumericalError, PenetranceError
from .evaluate import cross_validated_roc, dic, family_loglik_matrix, log_cpo
from .inference import (combine_chains, penetrance_posterior, read_draws, run_chain, summarize, write_draws,
                        write_summary)
from .likelihood import CohortLikelihood
from .pedigree import administrative_censor, load_pedigrees, write_pedigrees
from .predict import predict_risk
from .simulate import simulate_cohort

__all__ = ["main", "cmd_simulate", "cmd_fit", "cmd_predict", "cmd_evaluate", "EXIT_USAGE", "EXIT_INVALID",
           "EXIT_NUMERICAL"]

EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4


class UsageError(Exception):
    """Bad command-line usage detected after argument parsing."""


# ---------------------------------------------------------------- helpers
def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(dest: Path, command: str, cfg: RunConfig, inputs=(), outputs=()) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "config": json.loads(json.dumps(cfg.to_dict(), default=_jsonable)),
        # keyed by file name so a run reproduced elsewhere yields the same manifest
        "inputs": {Path(p).name: _sha256(p) for p in inputs},
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
    }
    _write_text(dest, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(o):
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _fmt(v) -> str:
    return repr(float(v))


def _table(header, rows) -> str:
    lines = ["\t".join(header)]
    lines += ["\t".join(v if isinstance(v, str) else _fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _sidecar(out: Path, suffix: str) -> Path:
    return out.with_name(out.name + suffix)


def _cohort(path, cfg: RunConfig):
    spec = cfg.model.spec()
    peds = load_pedigrees(path, spec.K)
    if cfg.model.effective_censor_age is not None:
        peds = administrative_censor(peds, cfg.model.effective_censor_age)
    return peds, spec


def _ages(cfg: RunConfig, time_scale: float) -> np.ndarray:
    """Configured age grid, else whole years up to 75 (or 21 points on short time scales)."""
    if cfg.predict.ages:
        return np.asarray(cfg.predict.ages, dtype=float)
    if time_scale >= 20:
        return np.arange(0.0, np.floor(min(75.0, time_scale)) + 1.0)
    return np.linspace(0.0, time_scale, 21)


# ---------------------------------------------------------------- commands
def cmd_simulate(cfg: RunConfig, out) -> list[Path]:
    """Simulate a cohort into ``out`` (pedigree format) plus a manifest."""
    out = Path(out)
    peds = simulate_cohort(cfg.simulate)
    write_pedigrees(peds, out)
    _write_manifest(_sidecar(out, ".manifest.json"), "simulate", cfg, outputs=[out])
    return [out]


def _load_model(model_dir: Path):
    with open(model_dir / "model.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    return meta


def cmd_fit(pedigree, cfg: RunConfig, out, threads: int = 1, resume: bool = False, progress=None) -> list[Path]:
    """Fit the model; writes draws, summary, penetrance grid, trace and manifest into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    peds, spec = _cohort(pedigree, cfg)
    phi = cfg.model.prior_allele_frequency()
    rule = cfg.model.rule()
    sampler = replace(cfg.sampler, threads=threads)

    # one chain per child seed; each chain checkpoints separately
    seeds = np.random.SeedSequence(sampler.seed).spawn(sampler.chains) if sampler.chains > 1 else [sampler.seed]
    chains = []
    for c, ss in enumerate(seeds):
        data = CohortLikelihood(peds, spec, phi, rule, time_scale=cfg.model.time_scale, threads=threads)
        ck = out / ("checkpoint.npz" if sampler.chains == 1 else f"checkpoint_{c + 1}.npz")
        chains.append(run_chain(data, cfg.priors, replace(sampler, chains=1), seed=ss, checkpoint=ck,
                                checkpoint_every=cfg.checkpoint_every, resume=resume, progress=progress))
    samples = chains[0] if len(chains) == 1 else combine_chains(chains)

    files = {n: out / n for n in ("draws.tsv", "summary.tsv", "penetrance.tsv", "trace.tsv", "model.json")}
    write_draws(samples, files["draws.tsv"])
    write_summary(summarize(samples), files["summary.tsv"])
    trace_rows = [(str(c + 1), str(it + 1), lp) for c, ch in enumerate(chains) for it, lp in enumerate(ch.trace)]
    _write_text(files["trace.tsv"], _table(["chain", "iteration", "log_post"], trace_rows))

    ages = _ages(cfg, samples.time_scale)
    rows = []
    for k in range(1, spec.K + 1):
        for g in (0, 1):
            for x in (0, 1):
                if spec.constraint.fires(k, g, x):
                    continue
                curve = penetrance_posterior(samples, k, g, x, ages, max_draws=cfg.predict.max_draws)
                for a, mu, lo, hi in zip(ages, curve.mean, curve.lower, curve.upper):
                    rows.append((str(k), str(g), str(x), a, mu, lo, hi))
    _write_text(files["penetrance.tsv"], _table(["cause", "G", "X", "age_years", "q_mean", "q_lo", "q_hi"], rows))

    meta = {
        "version": __version__,
        "model": asdict(cfg.model),
        "time_scale": samples.time_scale,
        "allele_frequency": phi,
        "families": list(samples.family_ids),
        "n_draws": samples.n_draws,
        "acceptance": samples.acceptance,
    }
    _write_text(files["model.json"], json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")
    _write_manifest(out / "manifest.json", "fit", cfg, inputs=[pedigree], outputs=list(files.values()))
    return list(files.values())


def _model_config(meta):
    from .config import ModelConfig

    m = dict(meta["model"])
    if m.get("terms") is not None:
        m["terms"] = tuple(tuple(t) for t in m["terms"])
    if m.get("zero_for_male") is not None:
        m["zero_for_male"] = tuple(m["zero_for_male"])
    return ModelConfig(**m)


def _load_fit(model_dir):
    model_dir = Path(model_dir)
    meta = _load_model(model_dir)
    mc = _model_config(meta)
    spec = mc.spec()
    samples = read_draws(model_dir / "draws.tsv", spec, meta["time_scale"])
    return meta, mc, spec, samples


def _find_counselee(peds, counselee: str | None, family: str | None):
    if counselee is None:
        hits = [(p, m.id) for p in peds for m in p.members if m.is_counselee]
        if family is not None:
            hits = [h for h in hits if h[0].family_id == family]
        if len(hits) != 1:
            raise UsageError("give --counselee (and --family if ids repeat) or flag exactly one counselee "
                             f"in the pedigree file; found {len(hits)} flagged")
        return hits[0]
    hits = [p for p in peds if counselee in p and (family is None or p.family_id == family)]
    if len(hits) != 1:
        raise UsageError(f"counselee {counselee!r} matches {len(hits)} families; use --family")
    return hits[0], counselee


def cmd_predict(model_dir, pedigree, counselee: str | None, cfg: RunConfig, out, family: str | None = None):
    """Risk curves of one counselee for every cause plus their carrier probability."""
    out = Path(out)
    meta, mc, spec, samples = _load_fit(model_dir)
    peds = load_pedigrees(pedigree, spec.K)
    if mc.effective_censor_age is not None:
        peds = administrative_censor(peds, mc.effective_censor_age)
    ped, member = _find_counselee(peds, counselee, family)
    ages = _ages(cfg, samples.time_scale)
    pc = cfg.predict
    seed = derive_seed(cfg.seed, "predict")
    rows, carrier = [], None
    for k in range(1, spec.K + 1):
        r = predict_risk(ped, member, k, ages, samples, meta["allele_frequency"], pc.frailty_mode, pc.level,
                         pc.max_draws, seed)
        carrier = r
        rows += [(str(k), a, mu, lo, hi) for a, mu, lo, hi in zip(ages, r.mean, r.lower, r.upper)]
    _write_text(out, _table(["cause", "age", "risk_mean", "risk_lo", "risk_hi"], rows))
    summary = _sidecar(out, ".carrier.tsv")
    _write_text(summary, _table(["family_id", "member", "carrier_mean", "carrier_lo", "carrier_hi"],
                                [(ped.family_id, member, carrier.carrier_probability, carrier.carrier_lower,
                                  carrier.carrier_upper)]))
    _write_manifest(_sidecar(out, ".manifest.json"), "predict", cfg,
                    inputs=[Path(model_dir) / "draws.tsv", Path(model_dir) / "model.json", pedigree],
                    outputs=[out, summary])
    return [out, summary]


def cmd_evaluate(metric: str, cfg: RunConfig, out, pedigree, model_dir=None, threads: int = 1,
                 age: float | None = None, cause: int | None = None):
    """``cpo``/``dic`` score a fitted model on its data; ``roc`` refits on random half splits."""
    out = Path(out)
    inputs = [pedigree]
    written = [out]
    if metric in ("cpo", "dic"):
        if model_dir is None:
            raise UsageError(f"evaluate {metric} needs --model")
        meta, mc, spec, samples = _load_fit(model_dir)
        inputs += [Path(model_dir) / "draws.tsv", Path(model_dir) / "model.json"]
        peds = load_pedigrees(pedigree, spec.K)
        if mc.effective_censor_age is not None:
            peds = administrative_censor(peds, mc.effective_censor_age)
        data = CohortLikelihood(peds, spec, meta["allele_frequency"], mc.rule(), time_scale=meta["time_scale"],
                                threads=threads)
        ll = family_loglik_matrix(samples, data)
        if metric == "cpo":
            lc = log_cpo(ll)
            rows = [(f, float(np.exp(v)), v) for f, v in zip(data.cohort.family_ids, lc)]
            _write_text(out, _table(["family_id", "cpo", "log_cpo"], rows))
            print(f"psml\t{float(lc.sum())!r}")
        else:
            res = dic(samples, data, ll)
            _write_text(out, _table(["metric", "value"], [(n, getattr(res, n)) for n in
                                                          ("dic", "mean_deviance", "p_d", "deviance_at_mean")]))
    elif metric == "roc":
        ec = cfg.evaluate
        age = ec.age if age is None else age
        cause = ec.cause if cause is None else cause
        if age is None:
            raise UsageError("evaluate roc needs a landmark age (--age or [evaluate] age)")
        peds, spec = _cohort(pedigree, cfg)
        res = cross_validated_roc(
            peds, spec, cfg.model.prior_allele_frequency(), age, cause, rule=cfg.model.rule(), priors=cfg.priors,
            sampler=replace(cfg.sampler, threads=threads), repetitions=ec.repetitions,
            seed=derive_seed(cfg.seed, "evaluate"), frailty_mode=ec.frailty_mode, max_draws=ec.max_draws,
            level=ec.level, time_scale=cfg.model.time_scale)
        rows = [(str(r + 1), p, f, t) for r, c in enumerate(res.curves) for p, f, t in zip(c.psi, c.fpr, c.tpr)]
        text = _table(["repetition", "psi", "fpr", "tpr"], rows) + f"auc\t{res.auc!r}\n"
        _write_text(out, text)
        band = _sidecar(out, ".band.tsv")
        _write_text(band, _table(["fpr", "tpr_mean", "tpr_lo", "tpr_hi"],
                                 zip(res.fpr_grid, res.tpr_mean, res.tpr_lower, res.tpr_upper)))
        written.append(band)
    else:
        raise UsageError(f"unknown metric {metric!r}")
    _write_manifest(_sidecar(out, ".manifest.json"), f"evaluate {metric}", cfg, inputs=inputs, outputs=written)
    return written


# ---------------------------------------------------------------- parsing
def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", required=True, help="output file (directory for fit)")
    common.add_argument("--seed", type=int, help="run seed (overrides PENETRANCE_SEED and the config)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--no-ascertainment-correction", action="store_true")
    model.add_argument("--no-frailty", action="store_true")
    model.add_argument("--baseline", choices=("bernstein", "exponential", "weibull", "piecewise"))
    model.add_argument("--degree", type=int, metavar="M", help="Bernstein degree or number of pieces")

    ap = argparse.ArgumentParser(prog="penetrance", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate ascertained families")
    s.add_argument("--families", type=int, help="number of families")

    f = sub.add_parser("fit", parents=[common, model], help="sample the posterior")
    f.add_argument("pedigree")
    f.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    f.add_argument("--iterations", type=int)
    f.add_argument("--burn-in", type=int)
    f.add_argument("--thin", type=int)
    f.add_argument("--quiet", action="store_true")

    p = sub.add_parser("predict", parents=[common], help="personalised risk of a counselee")
    p.add_argument("model", help="fit output directory")
    p.add_argument("pedigree")
    p.add_argument("--counselee", help="member id (default: the flagged counselee)")
    p.add_argument("--family", help="family id when member ids repeat across families")

    e = sub.add_parser("evaluate", parents=[common, model], help="model comparison and validation")
    e.add_argument("metric", choices=("cpo", "dic", "roc"))
    e.add_argument("pedigree")
    e.add_argument("--model", help="fit output directory (cpo, dic)")
    e.add_argument("--age", type=float, help="landmark age (roc)")
    e.add_argument("--cause", type=int, help="cause index (roc)")
    e.add_argument("--repetitions", type=int, help="random half splits (roc)")
    return ap


def _resolve_config(args) -> RunConfig:
    ov: dict = {}
    if getattr(args, "no_ascertainment_correction", False):
        ov.setdefault("model", {})["correct_ascertainment"] = False
    if getattr(args, "no_frailty", False):
        ov.setdefault("model", {})["frailty"] = False
    if getattr(args, "baseline", None):
        ov.setdefault("model", {})["baseline"] = args.baseline
    if getattr(args, "degree", None) is not None:
        ov.setdefault("model", {})["degree"] = args.degree
    for key in ("iterations", "burn_in", "thin"):
        if getattr(args, key, None) is not None:
            ov.setdefault("sampler", {})[key] = getattr(args, key)
    if getattr(args, "families", None) is not None:
        ov.setdefault("simulate", {})["family_count"] = args.families
    if getattr(args, "repetitions", None) is not None:
        ov.setdefault("evaluate", {})["repetitions"] = args.repetitions
    return load_config(args.config, args.seed, ov)


def _progress(total: int):
    step = max(1, total // 20)

    def report(it, lp):
        if it % step == 0 or it == total:
            print(f"iteration {it}/{total}  log posterior {lp:.3f}", file=sys.stderr)
    return report


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _resolve_config(args)
        if args.command == "simulate":
            written = cmd_simulate(cfg, args.out)
        elif args.command == "fit":
            prog = None if args.quiet else _progress(cfg.sampler.iterations)
            written = cmd_fit(args.pedigree, cfg, args.out, args.threads, args.resume, prog)
        elif args.command == "predict":
            written = cmd_predict(args.model, args.pedigree, args.counselee, cfg, args.out, args.family)
        else:
            written = cmd_evaluate(args.metric, cfg, args.out, args.pedigree, args.model, args.threads,
                                   args.age, args.cause)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PenetranceError, ValueError, KeyError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
