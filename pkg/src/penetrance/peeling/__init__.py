"""Exact family-wise likelihood by Elston-Stewart peeling.

The compiled kernel (``_kernel``) is used when it was built; otherwise the
pure-Python kernel is selected at import time. Either can be requested per
call with ``kernel="cython"`` or ``kernel="python"``; both produce identical
results.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .. import genetics
from ..errors import ImpossiblePedigreeError
from ..pedigree import Pedigree, check
from ..riskmodel import ModelParams, individual_log_likelihood
from . import _kernel_py

try:
    from . import _kernel as _compiled
except ImportError:  # extension not built; fall back to the pure-Python kernel
    _compiled = None

KERNEL = "cython" if _compiled is not None else "python"

__all__ = [
    "KERNEL",
    "CompiledCohort",
    "PeelMessages",
    "family_log_likelihood",
    "compute_messages",
    "peel_schedule",
]


def _as_prior(prior) -> np.ndarray:
    if np.ndim(prior) == 0:
        return genetics.founder_prior(float(prior))
    p = np.asarray(prior, dtype=float)
    if p.shape != (3,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
        raise ValueError("founder prior must be a probability vector over (aa, Aa, AA)")
    return p


def peel_schedule(p: Pedigree, pivot: str | None = None):
    """Leaves-to-pivot order of matings, with each mating's outward member.

    Returns ``(matings, out, role)`` where ``matings`` is a list of
    ``(father_idx, mother_idx, child_idxs)`` in processing order.
    """
    idx = p.index
    pivot = p.proband.id if pivot is None else pivot
    if pivot not in idx:
        raise ValueError(f"pivot {pivot!r} not in family {p.family_id}")
    mats = [(idx[m.father], idx[m.mother], tuple(idx[c] for c in m.children)) for m in p.matings]
    person_mats: list[list[int]] = [[] for _ in p.members]
    for j, (fa, mo, ch) in enumerate(mats):
        for q in (fa, mo, *ch):
            person_mats[q].append(j)
    # breadth-first from the pivot over the person/mating tree
    order, out = [], {}
    seen_p = {idx[pivot]}
    frontier = [idx[pivot]]
    while frontier:
        nxt = []
        for q in frontier:
            for j in person_mats[q]:
                if j in out:
                    continue
                out[j] = q
                order.append(j)
                fa, mo, ch = mats[j]
                for r in (fa, mo, *ch):
                    if r not in seen_p:
                        seen_p.add(r)
                        nxt.append(r)
        frontier = nxt
    order.reverse()
    roles = []
    for j in order:
        fa, mo, _ = mats[j]
        roles.append(0 if out[j] == fa else 1 if out[j] == mo else 2)
    return [mats[j] for j in order], [out[j] for j in order], roles


class CompiledCohort:
    """Flattened peeling schedules for a list of pedigrees.

    Compiled once and reused for every likelihood evaluation; evaluations
    only supply per-person phenotype log-likelihoods.
    """

    def __init__(self, pedigrees, pivots=None):
        self.pedigrees = list(pedigrees)
        n_fam = len(self.pedigrees)
        pivots = [None] * n_fam if pivots is None else list(pivots)
        ps, ms, roots = [0], [0], []
        father, mother, outp, role, cstart, children = [], [], [], [], [0], []
        fam_of, founder, geno, sex, time, cause, proband = [], [], [], [], [], [], []
        ids = []
        for f, (ped, piv) in enumerate(zip(self.pedigrees, pivots)):
            base = ps[-1]
            mats, outs, roles = peel_schedule(ped, piv)
            for (fa, mo, ch), o, r in zip(mats, outs, roles):
                father.append(base + fa)
                mother.append(base + mo)
                outp.append(base + o)
                role.append(r)
                children.extend(base + c for c in ch)
                cstart.append(len(children))
            piv_id = ped.proband.id if piv is None else piv
            roots.append(base + ped.index[piv_id])
            proband.append(base + ped.index[ped.proband.id])
            for m in ped.members:
                ids.append((ped.family_id, m.id))
                fam_of.append(f)
                founder.append(m.is_founder)
                geno.append(-1 if m.genotype is None else m.genotype)
                sex.append(m.male)
                time.append(m.phenotype.time)
                cause.append(m.phenotype.cause)
            ps.append(base + len(ped))
            ms.append(len(father))
        ip = np.intp
        self.n_families = n_fam
        self.n_persons = ps[-1]
        self.ids = ids
        self.family_ids = [p.family_id for p in self.pedigrees]
        self.fam_person_start = np.asarray(ps, dtype=ip)
        self.fam_mating_start = np.asarray(ms, dtype=ip)
        self.fam_root = np.asarray(roots, dtype=ip)
        self.mat_father = np.asarray(father, dtype=ip)
        self.mat_mother = np.asarray(mother, dtype=ip)
        self.mat_out = np.asarray(outp, dtype=ip)
        self.mat_role = np.asarray(role, dtype=ip)
        self.mat_child_start = np.asarray(cstart, dtype=ip)
        self.mat_children = np.asarray(children, dtype=ip)
        self.fam_of = np.asarray(fam_of, dtype=ip)
        self.is_founder = np.asarray(founder, dtype=bool)
        self.genotype = np.asarray(geno, dtype=int)
        self.male = np.asarray(sex, dtype=int)
        self.time = np.asarray(time, dtype=float)
        self.cause = np.asarray(cause, dtype=int)
        self.proband = np.asarray(proband, dtype=ip)
        self._acc = np.zeros((self.n_persons, 3))
        self._lsc = np.zeros(self.n_persons)

    def static_weights(self, prior) -> np.ndarray:
        """``log`` genotype-consistency mask plus founder prior, per latent state."""
        prior = _as_prior(prior)
        mask = np.ones((self.n_persons, 3))
        mask[self.genotype == 0] = (1.0, 0.0, 0.0)
        mask[self.genotype == 1] = (0.0, 1.0, 1.0)
        w = np.where(self.is_founder[:, None], mask * prior, mask)
        with np.errstate(divide="ignore"):
            return np.log(w)

    def workspace(self):
        """Fresh scratch buffers; callers peeling concurrently need one each."""
        return np.zeros((self.n_persons, 3)), np.zeros(self.n_persons)

    def peel(self, logev, static, threads: int = 1, kernel: str | None = None,
             workspace=None) -> np.ndarray:
        """``log Pr(H_f, G_obs,f)`` for every family ``f``.

        ``logev`` has shape ``(2, n_persons)``: phenotype log-likelihood of
        each person for non-carrier and carrier status.
        """
        kernel = kernel or KERNEL
        acc, lsc = (self._acc, self._lsc) if workspace is None else workspace
        logev = np.ascontiguousarray(logev, dtype=float)
        static = np.ascontiguousarray(static, dtype=float)
        out = np.empty(self.n_families)
        sched = (self.fam_person_start, self.fam_mating_start, self.fam_root, self.mat_father,
                 self.mat_mother, self.mat_out, self.mat_role, self.mat_child_start, self.mat_children)
        if kernel == "python":
            acc = [None] * self.n_persons
            lsc = [0.0] * self.n_persons
            res = [0.0] * self.n_families
            _kernel_py.peel_families(logev.tolist(), static.tolist(), *[a.tolist() for a in sched],
                                     0, self.n_families, res, acc, lsc)
            out[:] = res
            return self._recheck(out, logev, static, sched)
        if _compiled is None:
            raise RuntimeError("compiled peeling kernel is not available")
        if threads <= 1 or self.n_families < 2:
            _compiled.peel_families(logev, static, *sched, 0, self.n_families, out, acc, lsc)
            return self._recheck(out, logev, static, sched)
        bounds = np.linspace(0, self.n_families, min(threads, self.n_families) + 1).astype(int)

        def work(i):
            _compiled.peel_families(logev, static, *sched, bounds[i], bounds[i + 1], out, acc, lsc)

        with ThreadPoolExecutor(len(bounds) - 1) as ex:
            list(ex.map(work, range(len(bounds) - 1)))
        return self._recheck(out, logev, static, sched)

    @staticmethod
    def _recheck(out, logev, static, sched):
        # the scaled pass reports -inf when a family's genotype states span
        # more than the double range; redo those on the log scale
        lost = np.flatnonzero(out == -np.inf)
        if lost.size:
            ev, st = logev.tolist(), static.tolist()
            sc = [a.tolist() for a in sched]
            for f in lost:
                out[f] = _kernel_py.peel_family_log(ev, st, *sc, int(f))
        return out

    def log_genotype_probability(self, prior, threads: int = 1) -> np.ndarray:
        """``log Pr(G_obs)`` per family from a phenotype-free pass."""
        return self.peel(np.zeros((2, self.n_persons)), self.static_weights(prior), threads)


def _phenotype_logev(p: Pedigree, m: ModelParams, xi) -> np.ndarray:
    ev = np.empty((len(p), 2))
    for i, ind in enumerate(p.members):
        t = float(m.rescale(ind.phenotype.time))
        for g in (0, 1):
            ev[i, g] = individual_log_likelihood(m, g, ind.male, t, ind.phenotype.cause, xi)
    return ev


def family_log_likelihood(p: Pedigree, m: ModelParams, xi, prior, pivot: str | None = None,
                          kernel: str | None = None) -> float:
    """``log Pr(H | G_obs)`` for one family, marginalising missing genotypes."""
    check(p)
    cc = CompiledCohort([p], [pivot])
    static = cc.static_weights(prior)
    log_gobs = cc.peel(np.zeros((2, len(p))), static, kernel=kernel)[0]
    if log_gobs == -np.inf:
        raise ImpossiblePedigreeError(f"family {p.family_id}: observed genotypes violate Mendelian transmission")
    return float(cc.peel(_phenotype_logev(p, m, xi).T, static, kernel=kernel)[0] - log_gobs)


def _lse(v):
    mx = np.max(v)
    if mx == -np.inf:
        return -np.inf
    return mx + np.log(np.sum(np.exp(v - mx)))


def _mating_message(logT, lf, lm, lchildren, role, skip):
    """Log message from a nuclear family to one member.

    ``lf``/``lm``/``lchildren`` are log messages into the mating from the
    other members (``None`` for the receiving member). Everything stays on
    the log scale: with strongly conflicting evidence the surviving parental
    pairs can be far below the smallest double relative to each input's
    own maximum.
    """
    logW = np.zeros((3, 3))
    for j, lc in enumerate(lchildren):
        if role == 2 and j == skip:
            continue
        logW = logW + logsumexp(logT + lc, axis=2)
    if role == 0:
        return logsumexp(logW + lm[None, :], axis=1)
    if role == 1:
        return logsumexp(logW + lf[:, None], axis=0)
    return logsumexp((logW + lf[:, None] + lm[None, :])[..., None] + logT, axis=(0, 1))


@dataclass(frozen=True)
class PeelMessages:
    """Anterior and posterior messages for every member (log scale).

    ``log_anterior[j]`` is ``log Pr(H_j^-, G_j, G_obs^-)`` and
    ``log_posterior[j]`` is ``log Pr(H_j^+, G_obs^+ | G_j)``;
    ``log_evidence[j]`` is ``log Pr(H_j | G_j)`` plus the log indicator of
    ``j``'s own observed genotype, and ``log_mask`` that indicator alone.
    ``log_norm`` is ``log Pr(G_obs)``.
    """

    ids: tuple
    log_anterior: np.ndarray
    log_posterior: np.ndarray
    log_evidence: np.ndarray
    log_norm: float
    log_mask: np.ndarray | None = None

    @property
    def anterior(self):
        return np.exp(self.log_anterior)

    @property
    def posterior(self):
        return np.exp(self.log_posterior)

    def log_likelihood_via(self, j: int) -> float:
        """Family ``log Pr(H | G_obs)`` expanded around member ``j``."""
        return float(_lse(self.log_anterior[j] + self.log_evidence[j] + self.log_posterior[j]) - self.log_norm)

    def state_posterior(self, j: int, own_phenotype: bool = True) -> np.ndarray:
        """Posterior over ``(aa, Aa, AA)`` for member ``j``.

        With ``own_phenotype=False`` the member's own outcome is left out,
        so only relatives' histories and observed genotypes inform it.
        """
        own = self.log_evidence[j] if own_phenotype or self.log_mask is None else self.log_mask[j]
        v = self.log_anterior[j] + own + self.log_posterior[j]
        return np.exp(v - _lse(v))


def _two_pass(p: Pedigree, base: np.ndarray, prior: np.ndarray):
    """Sum-product over the person/mating tree; returns (anterior, posterior) logs."""
    with np.errstate(divide="ignore"):
        T = np.log(genetics.TRANSMISSION)
    idx = p.index
    n = len(p)
    mats = [(idx[m.father], idx[m.mother], [idx[c] for c in m.children]) for m in p.matings]
    parental = [-1] * n
    own: list[list[int]] = [[] for _ in range(n)]
    for j, (fa, mo, ch) in enumerate(mats):
        own[fa].append(j)
        own[mo].append(j)
        for c in ch:
            parental[c] = j
    with np.errstate(divide="ignore"):
        lprior = np.log(prior)
    # node ids: persons 0..n-1, matings n..n+len(mats)-1
    def nbrs(u):
        if u < n:
            return ([n + parental[u]] if parental[u] >= 0 else []) + [n + j for j in own[u]]
        fa, mo, ch = mats[u - n]
        return [fa, mo, *ch]

    root = 0
    order, parent = [root], {root: None}
    for u in order:
        for v in nbrs(u):
            if v not in parent:
                parent[v] = u
                order.append(v)
    msg: dict[tuple[int, int], np.ndarray] = {}

    def person_out(u, dst):
        v = base[u] + (lprior if parental[u] < 0 else 0.0)
        for w in nbrs(u):
            if w != dst:
                v = v + msg[(w, u)]
        return v

    def mating_out(u, dst):
        fa, mo, ch = mats[u - n]
        role = 0 if dst == fa else 1 if dst == mo else 2
        lf = None if role == 0 else msg[(fa, u)]
        lm = None if role == 1 else msg[(mo, u)]
        lch = [None if (role == 2 and c == dst) else msg[(c, u)] for c in ch]
        skip = ch.index(dst) if role == 2 else -1
        return _mating_message(T, lf, lm, lch, role, skip)

    def send(u, v):
        msg[(u, v)] = person_out(u, v) if u < n else mating_out(u, v)

    for u in reversed(order):
        if parent[u] is not None:
            send(u, parent[u])
    for u in order:
        for v in nbrs(u):
            if parent.get(v) == u:
                send(u, v)

    ant = np.empty((n, 3))
    post = np.zeros((n, 3))
    for u in range(n):
        ant[u] = lprior if parental[u] < 0 else msg[(n + parental[u], u)]
        for j in own[u]:
            post[u] = post[u] + msg[(n + j, u)]
    return ant, post


def compute_messages(p: Pedigree, m: ModelParams | None, xi, prior) -> PeelMessages:
    """Anterior/posterior messages of all members for fixed ``(theta, xi)``.

    With ``m`` set to ``None`` the phenotype evidence is dropped (genotype
    information only).
    """
    check(p)
    prior = _as_prior(prior)
    mask = np.array([genetics.genotype_mask(ind.genotype) for ind in p.members])
    with np.errstate(divide="ignore"):
        lmask = np.log(mask)
    ev = np.zeros((len(p), 2)) if m is None else _phenotype_logev(p, m, xi)
    base = ev[:, genetics.CARRIER] + lmask
    ant, post = _two_pass(p, base, prior)
    ant0, post0 = _two_pass(p, lmask, prior)
    log_norm = _lse(ant0[0] + lmask[0] + post0[0])
    if log_norm == -np.inf:
        raise ImpossiblePedigreeError(f"family {p.family_id}: observed genotypes violate Mendelian transmission")
    return PeelMessages(tuple(p.ids), ant, post, base, float(log_norm), lmask)
