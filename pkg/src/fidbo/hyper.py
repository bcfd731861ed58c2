"""Kernel-hyperparameter inference by slice sampling.

Hyperparameters (amplitude, lengthscales, optionally the noise level) get
independent Gaussian priors in log space.  A univariate slice sampler with
stepping-out and shrinkage (Neal 2003) walks the log-parameter vector, and the
marginalized posterior is approximated by an equally weighted mixture over K
retained draws, each carrying its own fitted GP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import IllConditionedModelError, InvalidStartError
from .gp import GP, fit_gp
from .kernels import KernelSpec

__all__ = [
    "HyperPrior",
    "HyperPosteriorSet",
    "slice_sample",
    "fit_hyper_posterior",
    "marginal_posterior",
    "MarginalPosterior",
]

_MAX_SHRINK = 100


def slice_sample(
    logdensity,
    init,
    n,
    *,
    burn_in=100,
    thin=10,
    step_width=1.0,
    max_step_out=20,
    rng=None,
    stats=None,
):
    """Draw ``n`` vectors from ``exp(logdensity)`` by coordinate-wise slice sampling.

    Each sweep updates every coordinate with a stepping-out bracket followed by
    shrinkage.  Brackets that would expand beyond ``max_step_out`` widths per
    side are capped; the occurrence count is recorded under
    ``stats['stepout_capped']`` when a ``stats`` dict is supplied.
    """
    rng = np.random.default_rng(rng)
    x = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    d = x.shape[0]
    fx = logdensity(x)
    if not np.isfinite(fx):
        raise InvalidStartError(f"log-density not finite at start point: {fx}")
    if stats is None:
        stats = {}
    stats.setdefault("stepout_capped", 0)
    stats.setdefault("shrink_exhausted", 0)

    width = np.broadcast_to(np.asarray(step_width, dtype=float), (d,))
    out = np.empty((n, d))
    kept = 0
    sweeps = burn_in + n * thin
    for sweep in range(sweeps):
        for i in range(d):
            w = width[i]
            logy = fx + np.log(rng.random())
            left = x[i] - w * rng.random()
            right = left + w
            xi0 = x[i]

            steps = 0
            while steps < max_step_out:
                x[i] = left
                if logdensity(x) <= logy:
                    break
                left -= w
                steps += 1
            else:
                stats["stepout_capped"] += 1
            steps = 0
            while steps < max_step_out:
                x[i] = right
                if logdensity(x) <= logy:
                    break
                right += w
                steps += 1
            else:
                stats["stepout_capped"] += 1

            accepted = False
            for _ in range(_MAX_SHRINK):
                xi = left + (right - left) * rng.random()
                x[i] = xi
                fx_new = logdensity(x)
                if fx_new > logy:
                    fx = fx_new
                    accepted = True
                    break
                if xi < xi0:
                    left = xi
                else:
                    right = xi
            if not accepted:
                stats["shrink_exhausted"] += 1
                x[i] = xi0
                fx = logdensity(x)
        if sweep >= burn_in and (sweep - burn_in) % thin == 0:
            out[kept] = x
            kept += 1
            if kept == n:
                break
    return out


@dataclass(frozen=True)
class HyperPrior:
    """Independent log-space Gaussian priors over kernel hyperparameters.

    The sampled vector is ``[log A, log h_1, ..., log h_d]``, extended by
    ``log noise_sd`` when ``fixed_noise_sd`` is None.
    """

    log_mean: np.ndarray
    log_sd: np.ndarray
    dim: int
    fixed_noise_sd: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "log_mean", np.asarray(self.log_mean, dtype=float))
        object.__setattr__(self, "log_sd", np.asarray(self.log_sd, dtype=float))
        if np.any(self.log_sd <= 0):
            raise ValueError("prior log-sd entries must be positive")
        expect = 1 + self.dim + (0 if self.fixed_noise_sd is not None else 1)
        if self.log_mean.shape != (expect,) or self.log_sd.shape != (expect,):
            raise ValueError(
                f"prior vectors must have length {expect} for dim {self.dim}"
            )

    @classmethod
    def from_data(cls, X, y, *, bounds=None, noise_sd=None, log_sd=1.0):
        """Center the priors on simple statistics of the data.

        Amplitude around the value variance, lengthscales around a quarter of
        each box width (falling back to the data span), noise — when sampled —
        around 1% of the value spread.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        d = X.shape[1]
        amp = max(float(np.var(y)), 1e-6) if y.size > 1 else 1.0
        if bounds is not None:
            widths = np.asarray(bounds, dtype=float)[:, 1] - np.asarray(bounds, dtype=float)[:, 0]
        else:
            widths = X.max(axis=0) - X.min(axis=0)
        widths = np.where(widths > 0, widths, 1.0)
        means = [np.log(amp)] + [np.log(0.25 * w) for w in widths]
        if noise_sd is None:
            means.append(np.log(max(0.01 * np.sqrt(amp), 1e-8)))
        m = np.array(means)
        return cls(m, np.full_like(m, log_sd), dim=d, fixed_noise_sd=noise_sd)

    def to_spec(self, theta):
        """Decode a log-parameter vector into a KernelSpec."""
        theta = np.asarray(theta, dtype=float)
        amp = float(np.exp(theta[0]))
        ls = np.exp(theta[1 : 1 + self.dim])
        noise = (
            self.fixed_noise_sd
            if self.fixed_noise_sd is not None
            else float(np.exp(theta[1 + self.dim]))
        )
        return KernelSpec(amp, ls, noise_sd=noise)

    def log_prior(self, theta):
        z = (np.asarray(theta, dtype=float) - self.log_mean) / self.log_sd
        return float(-0.5 * np.sum(z**2) - np.sum(np.log(self.log_sd)))


@dataclass
class HyperPosteriorSet:
    """K hyperparameter draws with their per-draw GP fits."""

    specs: list
    gps: list
    chain_end: np.ndarray
    stats: dict

    @property
    def k(self):
        return len(self.specs)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("need at least one hyperparameter draw")


def fit_hyper_posterior(
    observations,
    prior: HyperPrior,
    *,
    k=8,
    burn_in=100,
    thin=10,
    step_width=0.5,
    seed=None,
    warm_start=None,
):
    """Sample K hyperparameter draws and fit a GP under each.

    ``warm_start`` (a previous chain end, in log space) shortens burn-in on
    repeated refits as the data set grows.
    """
    obs = list(observations)

    def logdensity(theta):
        # Step-out probes can wander to log-values whose exp overflows;
        # nothing that far out carries posterior mass.
        if np.any(np.abs(theta) > 50.0):
            return -np.inf
        try:
            spec = prior.to_spec(theta)
        except Exception:
            return -np.inf
        try:
            lml = fit_gp(obs, spec).log_marginal_likelihood()
        except IllConditionedModelError:
            return -np.inf
        return lml + prior.log_prior(theta)

    init = prior.log_mean.copy() if warm_start is None else np.asarray(warm_start, float)
    if not np.isfinite(logdensity(init)):
        init = prior.log_mean.copy()
    stats = {}
    draws = slice_sample(
        logdensity,
        init,
        k,
        burn_in=burn_in,
        thin=thin,
        step_width=step_width,
        rng=seed,
        stats=stats,
    )
    specs = [prior.to_spec(t) for t in draws]
    gps = [fit_gp(obs, s) for s in specs]
    return HyperPosteriorSet(specs, gps, chain_end=draws[-1].copy(), stats=stats)


def marginal_posterior(hps: HyperPosteriorSet, Xq, kinds_q=None):
    """Per-component means and variances of the K-Gaussian mixture at Xq.

    Returns ``(means, variances, weights)`` with shapes (K, m), (K, m), (K,);
    the weights are uniform.
    """
    means, variances = [], []
    for gp in hps.gps:
        m, v = gp.posterior(Xq, kinds_q)
        means.append(m)
        variances.append(v)
    k = hps.k
    return np.array(means), np.array(variances), np.full(k, 1.0 / k)


class MarginalPosterior:
    """Convenience view of the hyperparameter-marginalized posterior."""

    def __init__(self, hps: HyperPosteriorSet):
        self.hps = hps

    def moments(self, Xq):
        """Mixture mean and variance (law of total variance across draws)."""
        means, variances, w = marginal_posterior(self.hps, Xq)
        mean = w @ means
        var = w @ (variances + means**2) - mean**2
        return mean, np.maximum(var, 0.0)

    def mean_and_grad(self, x):
        m = 0.0
        g = 0.0
        for gp in self.hps.gps:
            mi, gi = gp.mean_and_grad(x)
            m += mi
            g = g + gi
        k = self.hps.k
        return m / k, g / k

    def expected_improvement(self, Xq, best):
        """Mixture-averaged expected improvement below ``best`` (minimization)."""
        means, variances, w = marginal_posterior(self.hps, Xq)
        sd = np.sqrt(np.maximum(variances, 1e-300))
        z = (best - means) / sd
        ei = (best - means) * norm.cdf(z) + sd * norm.pdf(z)
        return np.maximum(w @ ei, 0.0)

    def lower_confidence_bound(self, Xq, beta=3.0):
        mean, var = self.moments(Xq)
        return mean - beta * np.sqrt(var)
