# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: CSR products, segmented sums, pairwise Hölder quotient."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow

cnp.import_array()


def csr_matvec(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
               const double complex[::1] data, const double complex[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double complex acc
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] y = out
    with nogil:
        for i in range(n):
            acc = 0
            for p in range(indptr[i], indptr[i + 1]):
                acc = acc + data[p] * x[indices[p]]
            y[i] = acc
    return out


def segment_sum(const double complex[::1] vals, const cnp.int64_t[::1] starts):
    """Sum ``vals[starts[s]:starts[s+1]]`` left to right for every segment (last runs to the end)."""
    cdef Py_ssize_t m = vals.shape[0]
    cdef Py_ssize_t ns = starts.shape[0]
    cdef Py_ssize_t s, p, stop
    cdef double complex acc
    out = np.empty(ns, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for s in range(ns):
            stop = starts[s + 1] if s + 1 < ns else m
            acc = 0
            for p in range(starts[s], stop):
                acc = acc + vals[p]
            o[s] = acc
    return out


def holder_max(const double[:, ::1] pts, const double complex[::1] vals,
               double alpha, double min_dist):
    """Max of |u(x)-u(y)|/|x-y|^alpha over pairs with |x-y| >= min_dist.

    Returns (value, number of admissible pairs)."""
    cdef Py_ssize_t m = pts.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, d2, q, best = 0.0
    cdef double min2 = min_dist * min_dist
    cdef double half = 0.5 * alpha
    cdef long long count = 0
    cdef double complex du
    with nogil:
        for i in range(m):
            for j in range(i + 1, m):
                dx = pts[i, 0] - pts[j, 0]
                dy = pts[i, 1] - pts[j, 1]
                dz = pts[i, 2] - pts[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < min2:
                    continue
                count += 1
                du = vals[i] - vals[j]
                q = sqrt(du.real * du.real + du.imag * du.imag) / pow(d2, half)
                if q > best:
                    best = q
    return best, count
