"""Pure-Python collect-pass peeling kernel.

Data layout (all families flattened, persons and matings globally indexed):

``logev[g, p]``
    log-likelihood of person ``p``'s phenotype given carrier status ``g``
    (carrier-major so vectorised producers work along the long axis).
``static[p, s]``
    log of genotype-consistency indicator plus, for founders, the log
    Hardy-Weinberg prior of latent state ``s``.
``fam_person_start``, ``fam_mating_start``
    CSR offsets of each family's persons and of its matings, the latter in
    leaves-to-root order for the family's pivot ``fam_root``.
``mat_father``, ``mat_mother``, ``mat_children`` (CSR by ``mat_child_start``)
    nuclear family members; ``mat_out`` is the member that lies toward the
    pivot and ``mat_role`` its role (0 father, 1 mother, 2 child).

Each person holds a max-normalised accumulator with a separate log scale;
a mating multiplies its message into the accumulator of its outward member.
The result ``out[f]`` is ``log Pr(H_f, G_obs,f)``.
"""
import math

KERNEL = "python"

_TA = (0.0, 0.5, 1.0)
TR = [[[(1 - _TA[a]) * (1 - _TA[b]),
        _TA[a] * (1 - _TA[b]) + (1 - _TA[a]) * _TA[b],
        _TA[a] * _TA[b]] for b in range(3)] for a in range(3)]
_CARRIER = (0, 1, 1)


def peel_families(logev, static, fam_person_start, fam_mating_start, fam_root,
                  mat_father, mat_mother, mat_out, mat_role, mat_child_start, mat_children,
                  lo, hi, out, acc, lsc):
    ninf = -math.inf
    for f in range(lo, hi):
        dead = False
        ev0, ev1 = logev[0], logev[1]
        for p in range(fam_person_start[f], fam_person_start[f + 1]):
            st = static[p]
            v = [ev0[p] + st[0], ev1[p] + st[1], ev1[p] + st[2]]
            mx = max(v)
            if mx == ninf:
                dead = True
                mx = 0.0
            acc[p] = [1.0 if x == mx else 0.0 if x == ninf else math.exp(x - mx) for x in v]
            lsc[p] = mx
        if dead:
            out[f] = ninf
            continue
        for mi in range(fam_mating_start[f], fam_mating_start[f + 1]):
            fa, mo, op, role = mat_father[mi], mat_mother[mi], mat_out[mi], mat_role[mi]
            wl = 0.0
            prod = 1.0
            W = [[1.0] * 3 for _ in range(3)]
            for ci in range(mat_child_start[mi], mat_child_start[mi + 1]):
                c = mat_children[ci]
                if role == 2 and c == op:
                    continue
                ac = acc[c]
                mx = 0.0
                for a in range(3):
                    Wa, Ta = W[a], TR[a]
                    for b in range(3):
                        t = Ta[b]
                        Wa[b] *= t[0] * ac[0] + t[1] * ac[1] + t[2] * ac[2]
                        if Wa[b] > mx:
                            mx = Wa[b]
                if mx <= 0.0:
                    dead = True
                    break
                W = [[w / mx for w in row] for row in W]
                wl += lsc[c]
                prod *= mx
                if prod < 1e-250:
                    wl += math.log(prod)
                    prod = 1.0
            if dead:
                break
            af, am = acc[fa], acc[mo]
            if role == 0:
                msg = [sum(am[b] * W[a][b] for b in range(3)) for a in range(3)]
                wl += lsc[mo]
            elif role == 1:
                msg = [sum(af[a] * W[a][b] for a in range(3)) for b in range(3)]
                wl += lsc[fa]
            else:
                msg = [sum(af[a] * am[b] * W[a][b] * TR[a][b][h] for a in range(3) for b in range(3))
                       for h in range(3)]
                wl += lsc[fa] + lsc[mo]
            wl += math.log(prod)
            ao = [acc[op][s] * msg[s] for s in range(3)]
            mx = max(ao)
            if mx <= 0.0:
                dead = True
                break
            acc[op] = [x / mx for x in ao]
            lsc[op] += wl + math.log(mx)
        if dead:
            out[f] = ninf
            continue
        p = fam_root[f]
        out[f] = lsc[p] + math.log(sum(acc[p]))


def _lse(v):
    mx = max(v)
    if mx == -math.inf:
        return mx
    return mx + math.log(sum(math.exp(x - mx) for x in v))


_LOG_TR = [[[math.log(t) if t > 0 else -math.inf for t in row] for row in plane] for plane in TR]


def peel_family_log(logev, static, fam_person_start, fam_mating_start, fam_root,
                    mat_father, mat_mother, mat_out, mat_role, mat_child_start, mat_children, f):
    """Same recursion as :func:`peel_families` for one family, entirely on the log scale.

    Slower, but immune to underflow when genotype states differ by more
    than the double range; used to recheck families the fast pass lost.
    """
    ev0, ev1 = logev[0], logev[1]
    acc = {}
    for p in range(fam_person_start[f], fam_person_start[f + 1]):
        st = static[p]
        acc[p] = [ev0[p] + st[0], ev1[p] + st[1], ev1[p] + st[2]]
    for mi in range(fam_mating_start[f], fam_mating_start[f + 1]):
        fa, mo, op, role = mat_father[mi], mat_mother[mi], mat_out[mi], mat_role[mi]
        W = [[0.0] * 3 for _ in range(3)]
        for ci in range(mat_child_start[mi], mat_child_start[mi + 1]):
            c = mat_children[ci]
            if role == 2 and c == op:
                continue
            ac = acc[c]
            for a in range(3):
                for b in range(3):
                    W[a][b] += _lse([_LOG_TR[a][b][h] + ac[h] for h in range(3)])
        af, am = acc[fa], acc[mo]
        if role == 0:
            msg = [_lse([am[b] + W[a][b] for b in range(3)]) for a in range(3)]
        elif role == 1:
            msg = [_lse([af[a] + W[a][b] for a in range(3)]) for b in range(3)]
        else:
            msg = [_lse([af[a] + am[b] + W[a][b] + _LOG_TR[a][b][h] for a in range(3) for b in range(3)])
                   for h in range(3)]
        acc[op] = [x + y for x, y in zip(acc[op], msg)]
    return _lse(acc[fam_root[f]])
