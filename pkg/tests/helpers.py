"""Independent oracles and generators shared by the test modules."""
import itertools

import numpy as np
from scipy.special import logsumexp

from penetrance.baseline import BaselineFamily
from penetrance.pedigree import Individual, Pedigree, Phenotype
from penetrance.riskmodel import CauseSpec, ModelParams, ModelSpec, StructuralConstraint

_TA = (0.0, 0.5, 1.0)


def mendel(child, father, mother):
    pf, pm = _TA[father], _TA[mother]
    return ((1 - pf) * (1 - pm), pf * (1 - pm) + (1 - pf) * pm, pf * pm)[child]


def hw(phi):
    return ((1 - phi) ** 2, 2 * phi * (1 - phi), phi**2)


def brute_force_joint(p: Pedigree, person_loglik, phi):
    """Enumerate every latent genotype configuration.

    ``person_loglik(ind, carrier)`` returns the phenotype log-likelihood.
    Returns the configurations consistent with the observed genotypes, one
    per row, with their log weights including and excluding phenotypes.
    """
    ids = p.ids
    pos = {i: k for k, i in enumerate(ids)}
    options = []
    for ind in p.members:
        if ind.genotype is None:
            options.append((0, 1, 2))
        elif ind.genotype == 0:
            options.append((0,))
        else:
            options.append((1, 2))
    configs = np.array(list(itertools.product(*options)), dtype=int).reshape(-1, len(ids))
    mendel_table = np.array([[[mendel(c, f, m) for m in range(3)] for f in range(3)] for c in range(3)])
    with np.errstate(divide="ignore"):
        log_prior = np.log(hw(phi))
        log_mendel = np.log(mendel_table)
    log_w = np.zeros(len(configs))
    log_ph = np.zeros(len(configs))
    for j, ind in enumerate(p.members):
        s = configs[:, j]
        if ind.is_founder:
            log_w += log_prior[s]
        else:
            log_w += log_mendel[s, configs[:, pos[ind.father]], configs[:, pos[ind.mother]]]
        log_ph += np.where(s > 0, person_loglik(ind, 1), person_loglik(ind, 0))
    return configs, log_w + log_ph, log_w


def brute_force_loglik(p, person_loglik, phi):
    _, a, b = brute_force_joint(p, person_loglik, phi)
    return float(logsumexp(a) - logsumexp(b))


def brute_force_carrier(p, person_loglik, phi):
    configs, a, _ = brute_force_joint(p, person_loglik, phi)
    w = np.exp(a - logsumexp(a))
    return {ind.id: float(w[configs[:, j] > 0].sum()) for j, ind in enumerate(p.members)}


def random_pedigree(rng, max_members=12, max_missing=6, n_causes=2, fam="F"):
    """Grow a loop-free connected pedigree by random tree-preserving moves."""
    members = {}
    order = []

    def add(pid, sex, father=None, mother=None):
        members[pid] = dict(sex=sex, father=father, mother=mother)
        order.append(pid)

    add("1", "M")
    add("2", "F")
    add("3", rng.choice(["M", "F"]), "1", "2")
    couples = [("1", "2")]
    n = 3
    while n < max_members:
        move = rng.integers(3)
        if move == 0:
            f, m = couples[rng.integers(len(couples))]
            n += 1
            add(str(n), rng.choice(["M", "F"]), f, m)
        elif move == 1 and n + 2 <= max_members:
            p = order[rng.integers(len(order))]
            n += 1
            spouse = str(n)
            add(spouse, "F" if members[p]["sex"] == "M" else "M")
            f, m = (p, spouse) if members[p]["sex"] == "M" else (spouse, p)
            couples.append((f, m))
            n += 1
            add(str(n), rng.choice(["M", "F"]), f, m)
        elif move == 2 and n + 2 <= max_members:
            founders = [i for i in order if members[i]["father"] is None]
            c = founders[rng.integers(len(founders))]
            f, m = str(n + 1), str(n + 2)
            n += 2
            add(f, "M")
            add(m, "F")
            members[c]["father"], members[c]["mother"] = f, m
            couples.append((f, m))
    ids = list(order)
    # parents listed before children for readability; not required
    n_missing = int(rng.integers(0, min(max_missing, len(ids)) + 1))
    missing = set(rng.choice(ids, size=n_missing, replace=False).tolist())
    proband = ids[rng.integers(len(ids))]
    inds = []
    for pid in ids:
        d = members[pid]
        geno = None if pid in missing else int(rng.integers(2))
        cause = int(rng.integers(0, n_causes + 1))
        inds.append(Individual(pid, fam, d["father"], d["mother"], d["sex"], geno,
                               Phenotype(float(rng.uniform(0.05, 1.0)), cause), pid == proband))
    return Pedigree(fam, tuple(inds))


def mendel_consistent(p: Pedigree):
    """Drop observed genotypes until the pedigree has positive probability."""
    from penetrance.peeling import CompiledCohort

    while True:
        cc = CompiledCohort([p])
        if np.isfinite(cc.log_genotype_probability(0.1)[0]):
            return p
        obs = [i for i, m in enumerate(p.members) if m.genotype is not None]
        j = obs[-1]
        mem = list(p.members)
        m = mem[j]
        mem[j] = Individual(m.id, m.family_id, m.father, m.mother, m.sex, None, m.phenotype, m.is_proband)
        p = Pedigree(p.family_id, tuple(mem))


def random_params(rng, K=2, degree=3, frailty=True, constraint=()):
    spec = ModelSpec(
        causes=tuple(CauseSpec(k, f"c{k}", ("G", "X", "GX")) for k in range(1, K + 1)),
        baseline=BaselineFamily("bernstein", degree),
        constraint=StructuralConstraint(frozenset(constraint)),
        frailty=frailty,
    )
    betas = [rng.normal(0, 1, 3) for _ in range(K)]
    gammas = [rng.uniform(0.05, 1.5, degree) for _ in range(K)]
    nus = rng.uniform(0.3, 5.0, K)
    return ModelParams.from_arrays(spec, betas, gammas, nus)


def model_person_loglik(m, xi):
    from penetrance.riskmodel import individual_log_likelihood

    def loglik(ind, g):
        return individual_log_likelihood(m, g, ind.male, m.rescale(ind.phenotype.time), ind.phenotype.cause, xi)

    return loglik


#: Acceptance verdicts, ``criterion -> (passed, detail)``, printed at the end of the run.
VERDICTS: dict = {}


def verdict(key, ok, detail=""):
    """Record and print one acceptance line; returns ``ok`` for the assertion."""
    VERDICTS[str(key)] = (bool(ok), detail)
    print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
    return bool(ok)
