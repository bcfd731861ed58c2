"""Pure-NumPy backend for Matern 5/2 cross-covariance matrices.

The compiled twin in ``_kernels_cy`` implements the same contract; this
module is the fallback selected at import time when the extension is
unavailable.  Plain value-value blocks are fully vectorized; blocks that
involve derivative operators fall back to a scalar loop.

Derivative kinds are encoded per row as ``(code, i, j)`` with code 0 for a
value, 1 for the gradient component ``i`` and 2 for the Hessian element
``(i, j)``; unused index slots hold -1.
"""

import numpy as np

from .errors import UnsupportedDerivativeError

SQRT5 = np.sqrt(5.0)

# Scaled distances below this are treated as coincident: the odd-order
# terms (which carry the 1/u singular factors) vanish in that limit.
_COINCIDENT_U = 1e-13


def pair_cov(z, A, h, ca, ia, ja, cb, ib, jb):
    """Covariance between two derivative observations separated by z = a - b."""
    inv_h2 = 1.0 / (h * h)
    w = z * inv_h2
    rho = float(np.dot(z, w))
    u = SQRT5 * np.sqrt(rho)

    if u < _COINCIDENT_U:
        return _pair_cov_coincident(A, inv_h2, ca, ia, ja, cb, ib, jb)

    E = np.exp(-u)
    P0 = A * (1.0 + u + u * u / 3.0) * E
    P1 = -(5.0 * A / 6.0) * (1.0 + u) * E
    P2 = (25.0 * A / 12.0) * E

    if ca == 0 and cb == 0:
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

    # Hess-Hess at distinct locations needs derivative orders past what the
    # Matern 5/2 supports robustly; only the coincident limit is defined.
    raise UnsupportedDerivativeError(
        "Hessian-Hessian covariance is only supported at coincident locations"
    )


def _pair_cov_coincident(A, inv_h2, ca, ia, ja, cb, ib, jb):
    order = ca + cb
    if order % 2 == 1:
        return 0.0
    if ca == 0 and cb == 0:
        return A
    if ca == 1 and cb == 1:
        return (5.0 * A / 3.0) * inv_h2[ia] if ia == ib else 0.0
    if ca == 2 and cb == 0:
        return -(5.0 * A / 3.0) * inv_h2[ia] if ia == ja else 0.0
    if ca == 0 and cb == 2:
        return -(5.0 * A / 3.0) * inv_h2[ib] if ib == jb else 0.0
    # Hess-Hess limit: only index patterns that pair up survive.
    out = 0.0
    if ia == ja and ib == jb:
        out += inv_h2[ia] * inv_h2[ib]
    if ia == ib and ja == jb:
        out += inv_h2[ia] * inv_h2[ja]
    if ia == jb and ja == ib:
        out += inv_h2[ia] * inv_h2[ja]
    return (25.0 * A / 3.0) * out


def _matern_values(d2, A):
    """Vectorized value-value kernel for an array of squared scaled distances."""
    u = SQRT5 * np.sqrt(np.maximum(d2, 0.0))
    return A * (1.0 + u + u * u / 3.0) * np.exp(-u)


def cross_cov_matrix(xa, ka, xb, kb, A, h):
    """Dense covariance block between two sets of derivative observations.

    Parameters
    ----------
    xa, xb : (na, D), (nb, D) float arrays of locations.
    ka, kb : (na, 3), (nb, 3) int arrays of encoded derivative kinds.
    A : output variance.
    h : (D,) lengthscales.
    """
    xa = np.ascontiguousarray(xa, dtype=float)
    xb = np.ascontiguousarray(xb, dtype=float)
    na, nb = xa.shape[0], xb.shape[0]

    if (ka[:, 0] == 0).all() and (kb[:, 0] == 0).all():
        sa = xa / h
        sb = xb / h
        d2 = (
            np.sum(sa * sa, axis=1)[:, None]
            + np.sum(sb * sb, axis=1)[None, :]
            - 2.0 * (sa @ sb.T)
        )
        return _matern_values(d2, A)

    out = np.empty((na, nb))
    for p in range(na):
        ca, ia, ja = ka[p]
        for q in range(nb):
            cb, ib, jb = kb[q]
            out[p, q] = pair_cov(
                xa[p] - xb[q], A, h, ca, ia, ja, cb, ib, jb
            )
    return out
