# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for Matern 5/2 cross-covariance matrices.

Same contract as ``_kernels_py.cross_cov_matrix``; kept in lockstep by
tests that compare the two backends on random mixed-kind inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

from .errors import UnsupportedDerivativeError

cdef double SQRT5 = sqrt(5.0)
cdef double COINCIDENT_U = 1e-13


cdef inline double _coincident(double A, double* inv_h2,
                               long ca, long ia, long ja,
                               long cb, long ib, long jb) nogil:
    cdef double out = 0.0
    if (ca + cb) % 2 == 1:
        return 0.0
    if ca == 0 and cb == 0:
        return A
    if ca == 1 and cb == 1:
        return (5.0 * A / 3.0) * inv_h2[ia] if ia == ib else 0.0
    if ca == 2 and cb == 0:
        return -(5.0 * A / 3.0) * inv_h2[ia] if ia == ja else 0.0
    if ca == 0 and cb == 2:
        return -(5.0 * A / 3.0) * inv_h2[ib] if ib == jb else 0.0
    if ia == ja and ib == jb:
        out += inv_h2[ia] * inv_h2[ib]
    if ia == ib and ja == jb:
        out += inv_h2[ia] * inv_h2[ja]
    if ia == jb and ja == ib:
        out += inv_h2[ia] * inv_h2[ja]
    return (25.0 * A / 3.0) * out


cdef inline double _pair(double* z, double* w, long D, double A, double* inv_h2,
                         long ca, long ia, long ja,
                         long cb, long ib, long jb, int* err) nogil:
    cdef long d
    cdef double rho = 0.0, u, E, P0, P1, P2, P3, out
    for d in range(D):
        rho += z[d] * w[d]
    u = SQRT5 * sqrt(rho)

    if u < COINCIDENT_U:
        return _coincident(A, inv_h2, ca, ia, ja, cb, ib, jb)

    E = exp(-u)
    P1 = -(5.0 * A / 6.0) * (1.0 + u) * E
    P2 = (25.0 * A / 12.0) * E

    if ca == 0 and cb == 0:
        P0 = A * (1.0 + u + u * u / 3.0) * E
        return P0
    if ca == 1 and cb == 0:
        return 2.0 * w[ia] * P1
    if ca == 0 and cb == 1:
        return -2.0 * w[ib] * P1
    if ca == 1 and cb == 1:
        out = -4.0 * w[ia] * w[ib] * P2
        if ia == ib:
            out -= 2.0 * inv_h2[ib] * P1
        return out
    if ca == 2 and cb == 0:
        out = 4.0 * w[ia] * w[ja] * P2
        if ia == ja:
            out += 2.0 * inv_h2[ia] * P1
        return out
    if ca == 0 and cb == 2:
        out = 4.0 * w[ib] * w[jb] * P2
        if ib == jb:
            out += 2.0 * inv_h2[ib] * P1
        return out

    P3 = -(125.0 * A / 24.0) * E / u
    if ca == 1 and cb == 2:
        out = 8.0 * P3 * w[ia] * w[ib] * w[jb]
        if ib == jb:
            out += 4.0 * P2 * inv_h2[ib] * w[ia]
        if ia == ib:
            out += 4.0 * P2 * inv_h2[ia] * w[jb]
        if ia == jb:
            out += 4.0 * P2 * inv_h2[ia] * w[ib]
        return out
    if ca == 2 and cb == 1:
        out = -8.0 * P3 * w[ia] * w[ja] * w[ib]
        if ia == ja:
            out -= 4.0 * P2 * inv_h2[ia] * w[ib]
        if ia == ib:
            out -= 4.0 * P2 * inv_h2[ib] * w[ja]
        if ja == ib:
            out -= 4.0 * P2 * inv_h2[ib] * w[ia]
        return out

    err[0] = 1
    return 0.0


def cross_cov_matrix(object xa_obj, object ka_obj, object xb_obj, object kb_obj,
                     double A, object h_obj):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] xa = np.ascontiguousarray(xa_obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] xb = np.ascontiguousarray(xb_obj, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2, mode="c"] ka = np.ascontiguousarray(ka_obj, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2, mode="c"] kb = np.ascontiguousarray(kb_obj, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] h = np.ascontiguousarray(h_obj, dtype=np.float64)

    cdef long na = xa.shape[0], nb = xb.shape[0], D = xa.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out = np.empty((na, nb))
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] inv_h2 = np.empty(D)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] z = np.empty(D)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] w = np.empty(D)

    cdef long p, q, d
    cdef int err = 0
    cdef double* zp = &z[0]
    cdef double* wp = &w[0]
    cdef double* ih = &inv_h2[0]

    for d in range(D):
        ih[d] = 1.0 / (h[d] * h[d])

    with nogil:
        for p in range(na):
            for q in range(nb):
                for d in range(D):
                    zp[d] = xa[p, d] - xb[q, d]
                    wp[d] = zp[d] * ih[d]
                out[p, q] = _pair(zp, wp, D, A, ih,
                                  ka[p, 0], ka[p, 1], ka[p, 2],
                                  kb[q, 0], kb[q, 1], kb[q, 2], &err)
                if err:
                    break
            if err:
                break

    if err:
        raise UnsupportedDerivativeError(
            "Hessian-Hessian covariance is only supported at coincident locations"
        )
    return out
