# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled point location and characteristic right-hand-side accumulation."""
import numpy as np

from libc.math cimport ceil
from libc.stdint cimport int64_t

DEF MAXD = 3
DEF MAXLOC = 10


cdef inline int64_t _locate_one(
    const double* x, int d, const double* lower, const double* spacing, int64_t N,
    const int64_t[:, ::1] stored, const int64_t[::1] lookup, int64_t nperm,
    double* bary,
) noexcept nogil:
    cdef double s[MAXD]
    cdef double xi[MAXD]
    cdef double xic[MAXD]
    cdef double path[MAXD + 1]
    cdef int sigma[MAXD]
    cdef int64_t idx, lattice = 0, stride = 1, code = 0, dpow = 1, p
    cdef double sc
    cdef int a, j, k, tmp
    for a in range(d):
        s[a] = (x[a] - lower[a]) / spacing[a]
        sc = s[a]
        if sc < 0.0:
            sc = 0.0
        elif sc > N:
            sc = <double>N
        idx = <int64_t>ceil(sc) - 1
        if idx < 0:
            idx = 0
        elif idx > N - 1:
            idx = N - 1
        xi[a] = s[a] - idx
        xic[a] = sc - idx
        lattice += idx * stride
        stride *= N
        sigma[a] = a
    # stable descending insertion sort of the clamped local coordinates
    for k in range(1, d):
        j = k
        while j > 0 and xic[sigma[j - 1]] < xic[sigma[j]]:
            tmp = sigma[j - 1]
            sigma[j - 1] = sigma[j]
            sigma[j] = tmp
            j -= 1
    for k in range(d):
        code += sigma[k] * dpow
        dpow *= d
    p = lookup[code]
    path[0] = 1.0 - xi[sigma[0]]
    for k in range(1, d):
        path[k] = xi[sigma[k - 1]] - xi[sigma[k]]
    path[d] = xi[sigma[d - 1]]
    for j in range(d + 1):
        bary[j] = path[stored[p, j]]
    return lattice * nperm + p


cdef inline void _shape(int degree, int d, const double* lam, const int64_t[:, ::1] edges,
                        double* out) noexcept nogil:
    cdef int a, e
    if degree == 1:
        for a in range(d + 1):
            out[a] = lam[a]
    else:
        for a in range(d + 1):
            out[a] = lam[a] * (2.0 * lam[a] - 1.0)
        for e in range(edges.shape[0]):
            out[d + 1 + e] = 4.0 * lam[edges[e, 0]] * lam[edges[e, 1]]


def locate(const double[:, ::1] points, const double[::1] lower, const double[::1] spacing,
           int64_t N, perms, const int64_t[:, ::1] stored, const int64_t[::1] lookup):
    cdef Py_ssize_t n = points.shape[0], i
    cdef int d = points.shape[1]
    cdef int64_t nperm = len(perms)
    cells_arr = np.empty(n, dtype=np.int64)
    bary_arr = np.empty((n, d + 1), dtype=np.float64)
    cdef int64_t[::1] cells = cells_arr
    cdef double[:, ::1] bary = bary_arr
    with nogil:
        for i in range(n):
            cells[i] = _locate_one(&points[i, 0], d, &lower[0], &spacing[0], N,
                                   stored, lookup, nperm, &bary[i, 0])
    return cells_arr, bary_arr


def evaluate(const double[::1] coeffs, const int64_t[:, ::1] cell_dofs, int degree,
             const int64_t[::1] cells, const double[:, ::1] bary):
    cdef Py_ssize_t n = cells.shape[0], i
    cdef int d = bary.shape[1] - 1
    cdef int nloc = cell_dofs.shape[1], a
    cdef double phi[MAXLOC]
    cdef double acc
    edges_arr = np.array([(i, j) for i in range(d + 1) for j in range(i + 1, d + 1)],
                         dtype=np.int64).reshape(-1, 2)
    cdef int64_t[:, ::1] edges = edges_arr
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            _shape(degree, d, &bary[i, 0], edges, phi)
            acc = 0.0
            for a in range(nloc):
                acc = acc + coeffs[cell_dofs[cells[i], a]] * phi[a]
            out[i] = acc
    return out_arr


def composed_accumulate(double[::1] out, const double[:, :, ::1] feet, const double[:, ::1] scale,
                        const int64_t[:, ::1] test_dofs, const double[:, ::1] test_basis,
                        const double[::1] coeffs, const int64_t[:, ::1] cell_dofs, int degree,
                        const double[::1] lower, const double[::1] spacing, int64_t N,
                        perms, const int64_t[:, ::1] stored, const int64_t[::1] lookup):
    cdef Py_ssize_t nc = feet.shape[0], c
    cdef int nq = feet.shape[1], d = feet.shape[2], q, a
    cdef int nloc = cell_dofs.shape[1]
    cdef int64_t nperm = len(perms), cell
    cdef double lam[MAXD + 1]
    cdef double phi[MAXLOC]
    cdef double local[MAXLOC]
    cdef double val
    edges_arr = np.array([(i, j) for i in range(d + 1) for j in range(i + 1, d + 1)],
                         dtype=np.int64).reshape(-1, 2)
    cdef int64_t[:, ::1] edges = edges_arr
    with nogil:
        for c in range(nc):
            for a in range(nloc):
                local[a] = 0.0
            for q in range(nq):
                cell = _locate_one(&feet[c, q, 0], d, &lower[0], &spacing[0], N,
                                   stored, lookup, nperm, lam)
                _shape(degree, d, lam, edges, phi)
                val = 0.0
                for a in range(nloc):
                    val = val + coeffs[cell_dofs[cell, a]] * phi[a]
                val = val * scale[c, q]
                for a in range(nloc):
                    local[a] = local[a] + val * test_basis[q, a]
            for a in range(nloc):
                out[test_dofs[c, a]] += local[a]
