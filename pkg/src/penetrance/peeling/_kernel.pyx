# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled collect-pass peeling over flattened pedigree schedules.

Mirrors ``_kernel_py.peel_families`` exactly; see that module for the data
layout.
"""
from libc.math cimport exp, log, INFINITY

cdef double TR[3][3][3]
cdef double _ta[3]
_ta[0] = 0.0
_ta[1] = 0.5
_ta[2] = 1.0
cdef int _a, _b
for _a in range(3):
    for _b in range(3):
        TR[_a][_b][0] = (1.0 - _ta[_a]) * (1.0 - _ta[_b])
        TR[_a][_b][1] = _ta[_a] * (1.0 - _ta[_b]) + (1.0 - _ta[_a]) * _ta[_b]
        TR[_a][_b][2] = _ta[_a] * _ta[_b]

cdef int CARRIER[3]
CARRIER[0] = 0
CARRIER[1] = 1
CARRIER[2] = 1

KERNEL = "cython"


cdef inline double _max3(double a, double b, double c) nogil:
    cdef double m = a
    if b > m:
        m = b
    if c > m:
        m = c
    return m


def peel_families(const double[:, ::1] logev, const double[:, ::1] static,
                  const Py_ssize_t[::1] fam_person_start,
                  const Py_ssize_t[::1] fam_mating_start,
                  const Py_ssize_t[::1] fam_root,
                  const Py_ssize_t[::1] mat_father,
                  const Py_ssize_t[::1] mat_mother,
                  const Py_ssize_t[::1] mat_out,
                  const Py_ssize_t[::1] mat_role,
                  const Py_ssize_t[::1] mat_child_start,
                  const Py_ssize_t[::1] mat_children,
                  Py_ssize_t lo, Py_ssize_t hi,
                  double[::1] out,
                  double[:, ::1] acc,
                  double[::1] lsc):
    cdef Py_ssize_t f, p, mi, ci, c, fa, mo, op, role
    cdef int s, a, b, h
    cdef double v[3]
    cdef double W[3][3]
    cdef double msg[3]
    cdef double mx, wl, tot, cw, prod
    cdef bint dead
    with nogil:
        for f in range(lo, hi):
            dead = False
            for p in range(fam_person_start[f], fam_person_start[f + 1]):
                for s in range(3):
                    v[s] = logev[CARRIER[s], p] + static[p, s]
                mx = _max3(v[0], v[1], v[2])
                if mx == -INFINITY:
                    dead = True
                    mx = 0.0
                for s in range(3):
                    if v[s] == mx:
                        acc[p, s] = 1.0
                    elif v[s] == -INFINITY:
                        acc[p, s] = 0.0
                    else:
                        acc[p, s] = exp(v[s] - mx)
                lsc[p] = mx
            if dead:
                out[f] = -INFINITY
                continue
            for mi in range(fam_mating_start[f], fam_mating_start[f + 1]):
                fa = mat_father[mi]
                mo = mat_mother[mi]
                op = mat_out[mi]
                role = mat_role[mi]
                wl = 0.0
                prod = 1.0
                for a in range(3):
                    for b in range(3):
                        W[a][b] = 1.0
                for ci in range(mat_child_start[mi], mat_child_start[mi + 1]):
                    c = mat_children[ci]
                    if role == 2 and c == op:
                        continue
                    mx = 0.0
                    for a in range(3):
                        for b in range(3):
                            cw = (TR[a][b][0] * acc[c, 0] + TR[a][b][1] * acc[c, 1]
                                  + TR[a][b][2] * acc[c, 2])
                            W[a][b] *= cw
                            if W[a][b] > mx:
                                mx = W[a][b]
                    if mx <= 0.0:
                        dead = True
                        break
                    for a in range(3):
                        for b in range(3):
                            W[a][b] /= mx
                    wl += lsc[c]
                    # one log per mating unless the running product nears underflow
                    prod *= mx
                    if prod < 1e-250:
                        wl += log(prod)
                        prod = 1.0
                if dead:
                    break
                if role == 0:
                    for a in range(3):
                        msg[a] = acc[mo, 0] * W[a][0] + acc[mo, 1] * W[a][1] + acc[mo, 2] * W[a][2]
                    wl += lsc[mo]
                elif role == 1:
                    for b in range(3):
                        msg[b] = acc[fa, 0] * W[0][b] + acc[fa, 1] * W[1][b] + acc[fa, 2] * W[2][b]
                    wl += lsc[fa]
                else:
                    for h in range(3):
                        tot = 0.0
                        for a in range(3):
                            for b in range(3):
                                tot += acc[fa, a] * acc[mo, b] * W[a][b] * TR[a][b][h]
                        msg[h] = tot
                    wl += lsc[fa] + lsc[mo]
                wl += log(prod)
                mx = 0.0
                for s in range(3):
                    acc[op, s] *= msg[s]
                    if acc[op, s] > mx:
                        mx = acc[op, s]
                if mx <= 0.0:
                    dead = True
                    break
                for s in range(3):
                    acc[op, s] /= mx
                lsc[op] += wl + log(mx)
            if dead:
                out[f] = -INFINITY
                continue
            p = fam_root[f]
            out[f] = lsc[p] + log(acc[p, 0] + acc[p, 1] + acc[p, 2])
