"""Gaussian-process regression with derivative observations.

A model is fit to a list of :class:`Observation` records, each tagged with a
kind from :mod:`fidbo.kernels` (function value, gradient component, or Hessian
entry).  The prior mean is zero after subtracting the empirical mean of the
*value* observations; gradient and Hessian observations are left unshifted,
since the constant shift does not affect them.

Numerical conditioning is handled with an escalating jitter ladder: the
Gram matrix gets ``1e-10 * amplitude`` added to its diagonal, increased
tenfold on each Cholesky failure up to ``1e-4 * amplitude`` before giving up
with :class:`~fidbo.errors.IllConditionedModelError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import IllConditionedModelError
from .kernels import VALUE, KernelSpec, cross_cov, encode_kinds

__all__ = ["Observation", "GP", "fit_gp"]

_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class Observation:
    """A single (possibly derivative) observation of the latent function.

    ``noise_sd`` overrides the model-level noise for this observation when
    given; derivative observations obtained from exact conditioning are
    typically entered with ``noise_sd=0``.
    """

    x: np.ndarray
    kind: tuple = VALUE
    y: float = 0.0
    noise_sd: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))


class GP:
    """A fitted Gaussian process posterior."""

    def __init__(self, spec, X, kinds, y, noise_sd, center, L, alpha, jitter):
        self.spec = spec
        self.X = X
        self.kinds = kinds
        self.y = y
        self.noise_sd = noise_sd
        self.center = center
        self.L = L
        self.alpha = alpha
        self.jitter = jitter

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.spec.dim

    def posterior(self, Xq, kinds_q=None, full_cov=False):
        """Posterior mean and (co)variance at query locations.

        Parameters
        ----------
        Xq : (m, d) array of query locations.
        kinds_q : optional (m, 3) int64 kind codes; defaults to all values.
        full_cov : return the full m-by-m covariance instead of its diagonal.
        """
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        if kinds_q is None:
            kinds_q = encode_kinds([VALUE] * Xq.shape[0])
        value_mask = kinds_q[:, 0] == 0
        Kqq = cross_cov(Xq, kinds_q, Xq, kinds_q, self.spec)
        if self.n == 0:
            mean = np.where(value_mask, self.center, 0.0)
            return (mean, Kqq) if full_cov else (mean, np.diag(Kqq).copy())
        Kqx = cross_cov(Xq, kinds_q, self.X, self.kinds, self.spec)
        mean = Kqx @ self.alpha
        mean[value_mask] += self.center
        V = solve_triangular(self.L, Kqx.T, lower=True)
        if full_cov:
            cov = Kqq - V.T @ V
            return mean, cov
        var = np.diag(Kqq) - np.einsum("ij,ij->j", V, V)
        return mean, np.maximum(var, 0.0)

    def mean_and_grad(self, x):
        """Posterior mean of the value and its gradient at a single point."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = self.dim
        kinds_q = np.empty((1 + d, 3), dtype=np.int64)
        kinds_q[0] = (0, -1, -1)
        for i in range(d):
            kinds_q[1 + i] = (1, i, -1)
        Xq = np.tile(x, (1 + d, 1))
        if self.n == 0:
            return self.center, np.zeros(d)
        Kqx = cross_cov(Xq, kinds_q, self.X, self.kinds, self.spec)
        out = Kqx @ self.alpha
        return out[0] + self.center, out[1:]

    def log_marginal_likelihood(self):
        """Log marginal likelihood of the (centred) training data."""
        if self.n == 0:
            return 0.0
        resid = self.y.copy()
        resid[self.kinds[:, 0] == 0] -= self.center
        quad = resid @ self.alpha
        logdet = 2.0 * np.sum(np.log(np.diag(self.L)))
        return -0.5 * (quad + logdet + self.n * np.log(2 * np.pi))

    def with_extra(self, observations):
        """Refit with additional observations appended (same hyperparameters)."""
        obs = [
            Observation(self.X[i], tuple(self.kinds[i]), self.y[i], self.noise_sd[i])
            for i in range(self.n)
        ]
        return fit_gp(obs + list(observations), self.spec)


def fit_gp(observations, spec: KernelSpec) -> GP:
    """Fit a GP posterior to observations under fixed hyperparameters."""
    obs = list(observations)
    n = len(obs)
    d = spec.dim
    X = np.zeros((n, d))
    kinds = np.zeros((n, 3), dtype=np.int64)
    y = np.zeros(n)
    noise_sd = np.zeros(n)
    for i, o in enumerate(obs):
        if o.x.shape[0] != d:
            raise ValueError(f"observation {i} has dimension {o.x.shape[0]}, expected {d}")
        X[i] = o.x
        kinds[i] = o.kind
        y[i] = o.y
        noise_sd[i] = spec.noise_sd if o.noise_sd is None else o.noise_sd

    value_mask = kinds[:, 0] == 0
    center = float(y[value_mask].mean()) if value_mask.any() else 0.0

    if n == 0:
        return GP(spec, X, kinds, y, noise_sd, center, None, None, 0.0)

    K = cross_cov(X, kinds, X, kinds, spec)
    K[np.diag_indices_from(K)] += noise_sd**2

    resid = y.copy()
    resid[value_mask] -= center

    jitter = _JITTER_START * spec.amplitude
    max_jitter = _JITTER_MAX * spec.amplitude
    while True:
        try:
            L = cholesky(K + jitter * np.eye(n), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > max_jitter:
                raise IllConditionedModelError(
                    f"Gram matrix not positive definite at jitter {jitter / 10.0:.3e}",
                    jitter=jitter / 10.0,
                ) from None

    alpha = cho_solve((L, True), resid)
    return GP(spec, X, kinds, y, noise_sd, center, L, alpha, jitter)
