"""Compiled vs pure-Python peeling kernel on a simulated cohort.

Usage: python3 benchmarks/bench_peeling.py [--families N] [--repeats R]
"""
import argparse
import timeit

import numpy as np

from penetrance.genetics import allele_frequency_for_prevalence
from penetrance.likelihood import CohortLikelihood
from penetrance.inference import initial_state
from penetrance.peeling import KERNEL
from penetrance.riskmodel import simulation_spec
from penetrance.simulate import SimulationConfig, simulate_cohort


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--families", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    peds = simulate_cohort(SimulationConfig(family_count=args.families, seed=1))
    data = CohortLikelihood(peds, simulation_spec(), allele_frequency_for_prevalence(1e-4))
    st = initial_state(data)
    terms = [data.cause_terms(k, st.betas[k - 1], None, st.log_xi[:, k - 1], log_params=st.log_gamma[k - 1])
             for k in range(1, data.spec.K + 1)]
    logev = sum(t.contribution for t in terms)
    cc, static = data.cohort, data.static

    print(f"{args.families} families, {cc.n_persons} persons; default kernel: {KERNEL}")
    results = {}
    for kernel in ("python", "cython"):
        try:
            ref = cc.peel(logev, static, kernel=kernel)
        except RuntimeError as exc:
            print(f"{kernel:>7}: unavailable ({exc})")
            continue
        n = max(1, args.repeats if kernel == "python" else args.repeats * 50)
        best = min(timeit.repeat(lambda: cc.peel(logev, static, kernel=kernel), number=n, repeat=3)) / n
        results[kernel] = (best, ref)
        print(f"{kernel:>7}: {best * 1e6:10.1f} us per cohort pass   total loglik {ref.sum():.6f}")
    if len(results) == 2:
        (tp, rp), (tc, rc) = results["python"], results["cython"]
        print(f"speed-up {tp / tc:.1f}x, max |difference| {np.max(np.abs(rp - rc)):.3g}")


if __name__ == "__main__":
    main()
