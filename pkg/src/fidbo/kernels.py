"""Matern 5/2 kernel over the augmented search space, with derivative pairs.

The kernel is the anisotropic Matern 5/2,

    k(a, b) = A (1 + sqrt(5) r + 5/3 r^2) exp(-sqrt(5) r),
    r^2 = sum_d (a_d - b_d)^2 / h_d^2,

which is exactly twice mean-square differentiable, so covariances between
values, gradient components and Hessian elements are available.  Supported
derivative pairs: value-value, value-grad, grad-grad, value-hess and
grad-hess anywhere; hess-hess only at coincident locations (the fourth
cross-derivative away from the diagonal sits at the kernel's limit of
validity and is never needed by the conditioning machinery).

Matrix construction is delegated to a compiled extension when available,
with a pure-NumPy fallback selected at import time (``FIDBO_PURE_PYTHON=1``
forces the fallback).
"""

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .errors import InvalidSpecError, UnsupportedDerivativeError

if os.environ.get("FIDBO_PURE_PYTHON"):
    _backend = _kernels_py
else:
    try:
        from . import _kernels_cy as _backend
    except ImportError:
        _backend = _kernels_py


def backend_name():
    """'compiled' when the Cython core is active, else 'python'."""
    return "compiled" if _backend.__name__.endswith("_kernels_cy") else "python"


# Derivative-kind constructors.  A kind is an (code, i, j) int tuple:
# code 0 = value, 1 = gradient component i, 2 = Hessian element (i, j).
VALUE = (0, -1, -1)


def grad(i):
    return (1, int(i), -1)


def hess(i, j):
    i, j = int(i), int(j)
    if i > j:
        i, j = j, i
    return (2, i, j)


def _check_kind(kind, dim):
    code, i, j = kind
    if code == 0:
        return
    if code == 1:
        if not 0 <= i < dim:
            raise InvalidSpecError(f"gradient index {i} out of range for dim {dim}")
        return
    if code == 2:
        if not (0 <= i <= j < dim):
            raise InvalidSpecError(f"Hessian index pair ({i},{j}) out of range for dim {dim}")
        return
    raise UnsupportedDerivativeError(f"unknown derivative kind code {code}")


def encode_kinds(kinds):
    """Pack an iterable of kind tuples into the (n, 3) int64 array backends take."""
    return np.asarray(list(kinds), dtype=np.int64).reshape(-1, 3)


_VALUE_ROW = encode_kinds([VALUE])


def value_kinds(n):
    """Encoded kind array for n plain value observations."""
    return np.broadcast_to(_VALUE_ROW, (n, 3))


@dataclass(frozen=True)
class KernelSpec:
    """Hyperparameters of the Matern 5/2 kernel.

    amplitude is the output variance (kernel at zero separation), one
    lengthscale per input dimension with the fidelity axis last, and a
    homoscedastic observation noise standard deviation that individual
    observations may override.
    """

    amplitude: float
    lengthscales: np.ndarray
    noise_sd: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "lengthscales", np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        )
        if not np.isfinite(self.amplitude) or self.amplitude <= 0:
            raise InvalidSpecError(f"amplitude must be positive, got {self.amplitude}")
        if self.lengthscales.ndim != 1 or not np.all(
            np.isfinite(self.lengthscales) & (self.lengthscales > 0)
        ):
            raise InvalidSpecError("lengthscales must be a vector of positive reals")
        if not np.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise InvalidSpecError(f"noise_sd must be non-negative, got {self.noise_sd}")

    @property
    def dim(self):
        return self.lengthscales.shape[0]


def kernel_eval(a, b, spec, da=VALUE, db=VALUE):
    """Covariance between derivative observations D_a f(a) and D_b f(b)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape or a.shape[0] != spec.dim:
        raise InvalidSpecError("location dimension mismatch with kernel spec")
    _check_kind(da, spec.dim)
    _check_kind(db, spec.dim)
    return float(
        _kernels_py.pair_cov(
            a - b, spec.amplitude, spec.lengthscales, da[0], da[1], da[2], db[0], db[1], db[2]
        )
    )


def cross_cov(xa, ka, xb, kb, spec):
    """Dense covariance block between two (locations, kinds) sets."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    return _backend.cross_cov_matrix(xa, ka, xb, kb, spec.amplitude, spec.lengthscales)


def cov_values(xa, xb, spec):
    """Value-value covariance block (the common hot path)."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    return _backend.cross_cov_matrix(
        xa, value_kinds(xa.shape[0]), xb, value_kinds(xb.shape[0]), spec.amplitude, spec.lengthscales
    )
