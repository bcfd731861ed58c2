"""Approximating the distribution of the global minimizer.

The fast path builds a weighted mixture of Gaussians: local searches on the
posterior mean locate candidate minima, each candidate gets a covariance
``H^{-1} Sigma_g H^{-T}`` from the posterior mean Hessian H and gradient
covariance Sigma_g, and weights come from the probability of each candidate
value lying below the best candidate's value.  Support points are drawn from
the mixture (clipped to the box) and re-weighted empirically by counting
which support point wins in joint posterior draws.

Baselines for validation: slice sampling over the expected-improvement or
negative lower-confidence-bound surface, and uniform draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .errors import IllConditionedModelError
from .gp import GP
from .hyper import MarginalPosterior, slice_sample
from .kernels import VALUE, encode_kinds, grad, hess

__all__ = [
    "LocalMinCandidate",
    "MixtureComponent",
    "SupportSet",
    "find_posterior_minima",
    "component_from_candidate",
    "compute_weights",
    "draw_support",
    "draw_minimizer_samples",
    "baseline_sampler",
    "sampler_metrics",
]

_DEDUP_SCALE = 1e-3
_GRADNORM_SCALE = 1e-5
_HESS_EIG_FLOOR_SCALE = 1e-6
_REJECTION_TRIES = 50


@dataclass
class LocalMinCandidate:
    """A local minimum of the posterior mean with its local posterior stats."""

    x_c: np.ndarray
    c: float
    sigma2: float
    H_mu: np.ndarray
    Sigma_g: np.ndarray


@dataclass
class MixtureComponent:
    weight: float
    center: np.ndarray
    covariance: np.ndarray
    domain: np.ndarray


@dataclass
class SupportSet:
    points: np.ndarray
    counts: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.points.shape[0]


def _draw_gps(model):
    """Per-hyperparameter-draw GPs behind any of the accepted model types."""
    if isinstance(model, MarginalPosterior):
        return model.hps.gps
    if hasattr(model, "gps"):
        return list(model.gps)
    if isinstance(model, GP):
        return [model]
    raise TypeError(f"cannot extract GP draws from {type(model).__name__}")


def _model_scales(gps):
    amp = float(np.mean([g.spec.amplitude for g in gps]))
    min_h = float(min(g.spec.lengthscales.min() for g in gps))
    return amp, min_h


def _mixture_mean_and_grad(gps, x):
    m = 0.0
    g = 0.0
    for gp in gps:
        mi, gi = gp.mean_and_grad(x)
        m += mi
        g = g + gi
    return m / len(gps), g / len(gps)


def candidate_stats(model, x):
    """Posterior statistics entering a :class:`LocalMinCandidate` at x.

    Mixture moments across hyperparameter draws: the gradient covariance uses
    the law of total covariance, the Hessian enters through its posterior
    mean only.
    """
    gps = _draw_gps(model)
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    kinds = [VALUE] + [grad(i) for i in range(d)]
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    kinds += [hess(i, j) for i, j in pairs]
    kq = encode_kinds(kinds)
    Xq = np.tile(x, (len(kinds), 1))

    vals, variances, gmeans, gcovs, hmeans = [], [], [], [], []
    for gp in gps:
        mean, cov = gp.posterior(Xq, kq, full_cov=True)
        vals.append(mean[0])
        variances.append(max(cov[0, 0], 0.0))
        gmeans.append(mean[1 : 1 + d])
        gcovs.append(cov[1 : 1 + d, 1 : 1 + d])
        H = np.zeros((d, d))
        for e, (i, j) in enumerate(pairs):
            H[i, j] = H[j, i] = mean[1 + d + e]
        hmeans.append(H)

    vals = np.array(vals)
    gmeans = np.array(gmeans)
    c = float(vals.mean())
    sigma2 = float(np.mean(variances) + vals.var())
    g_bar = gmeans.mean(axis=0)
    Sigma_g = np.mean(gcovs, axis=0) + np.einsum(
        "ki,kj->ij", gmeans - g_bar, gmeans - g_bar
    ) / len(gps)
    H_mu = np.mean(hmeans, axis=0)
    return LocalMinCandidate(x.copy(), c, sigma2, 0.5 * (H_mu + H_mu.T), 0.5 * (Sigma_g + Sigma_g.T))


def find_posterior_minima(model, domain, n_starts=None, seed=None, starts=None):
    """Local minima of the posterior mean inside the box.

    Multi-start bounded quasi-Newton descent with exact posterior gradients;
    converged points are filtered by gradient norm and deduplicated.  Start
    points come from a scrambled Sobol sequence unless given explicitly.
    """
    gps = _draw_gps(model)
    domain = np.asarray(domain, dtype=float)
    d = domain.shape[0]
    if n_starts is None:
        n_starts = max(20, 10 * d)
    amp, min_h = _model_scales(gps)

    if starts is None:
        sob = qmc.Sobol(d, scramble=True, seed=seed)
        n_pow2 = 1 << (n_starts - 1).bit_length()
        starts = qmc.scale(sob.random(n_pow2)[:n_starts], domain[:, 0], domain[:, 1])
    else:
        starts = np.atleast_2d(np.asarray(starts, dtype=float))

    def objective(x):
        m, g = _mixture_mean_and_grad(gps, x)
        return m, g

    found = []
    for x0 in starts:
        res = minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=domain,
            options={"maxiter": 200},
        )
        x = np.clip(res.x, domain[:, 0], domain[:, 1])
        _, g = _mixture_mean_and_grad(gps, x)
        interior = np.all(x > domain[:, 0] + 1e-12) and np.all(x < domain[:, 1] - 1e-12)
        # On-boundary minima of the mean are kept even with nonzero gradient.
        if interior and np.linalg.norm(g) >= _GRADNORM_SCALE * (amp / min_h):
            continue
        found.append(x)

    sep = _DEDUP_SCALE * min_h
    cands = []
    for x in found:
        cand = candidate_stats(model, x)
        cands.append(cand)
    cands.sort(key=lambda cd: cd.c)
    unique = []
    for cd in cands:
        if all(np.linalg.norm(cd.x_c - u.x_c) > sep for u in unique):
            unique.append(cd)
    return unique


def component_from_candidate(cand: LocalMinCandidate, domain):
    """Mixture component with covariance H^{-1} Sigma_g H^{-T}.

    The posterior mean Hessian is symmetrized and its eigenvalues clamped to
    a small positive floor; a Hessian with nonpositive trace is beyond repair
    and the candidate is dropped (returns None).
    """
    d = cand.x_c.shape[0]
    H = 0.5 * (cand.H_mu + cand.H_mu.T)
    tr = np.trace(H)
    if tr <= 0:
        return None
    w, V = np.linalg.eigh(H)
    floor = _HESS_EIG_FLOOR_SCALE * tr / d
    w = np.maximum(w, floor)
    Hinv = (V / w) @ V.T
    cov = Hinv @ cand.Sigma_g @ Hinv.T
    cov = 0.5 * (cov + cov.T)
    return MixtureComponent(np.nan, cand.x_c.copy(), cov, np.asarray(domain, float))


def compute_weights(cands):
    """Normalized probabilities of each candidate beating the best one.

    With u ~ N(c_i, sigma_i^2) and v ~ N(c_*, sigma_*^2) independent,
    the unnormalized weight is P(u < v) = Phi((c_* - c_i)/sqrt(sigma_i^2 +
    sigma_*^2)).
    """
    if not cands:
        raise ValueError("need at least one candidate")
    c = np.array([cd.c for cd in cands])
    s2 = np.array([cd.sigma2 for cd in cands])
    best = int(np.argmin(c))
    raw = np.empty(len(cands))
    for i in range(len(cands)):
        denom = np.sqrt(s2[i] + s2[best])
        if denom == 0.0:
            raw[i] = 0.5 if c[i] == c[best] else float(c[i] < c[best])
        else:
            raw[i] = norm.cdf((c[best] - c[i]) / denom)
    return raw / raw.sum()


def _cov_factor(cov):
    w, V = np.linalg.eigh(0.5 * (cov + cov.T))
    return V * np.sqrt(np.maximum(w, 0.0))


def draw_support(components, m, domain, seed=None):
    """m in-box draws from the weighted bounded-Gaussian mixture."""
    rng = np.random.default_rng(seed)
    domain = np.asarray(domain, dtype=float)
    lo, hi = domain[:, 0], domain[:, 1]
    weights = np.array([c.weight for c in components])
    if not np.isclose(weights.sum(), 1.0, atol=1e-9):
        raise ValueError("component weights must be normalized")
    which = rng.choice(len(components), size=m, p=weights)
    factors = [_cov_factor(c.covariance) for c in components]
    d = domain.shape[0]
    pts = np.empty((m, d))
    for i, k in enumerate(which):
        comp = components[k]
        x = None
        for _ in range(_REJECTION_TRIES):
            cand = comp.center + factors[k] @ rng.standard_normal(d)
            if np.all(cand >= lo) and np.all(cand <= hi):
                x = cand
                break
        if x is None:
            cand = comp.center + factors[k] @ rng.standard_normal(d)
            x = np.clip(cand, lo, hi)
        pts[i] = x
    return SupportSet(points=pts)


def _chol_with_ladder(cov, scale):
    jitter = 1e-10 * scale
    n = cov.shape[0]
    while True:
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > 1e-4 * scale:
                raise IllConditionedModelError(
                    "support covariance not factorizable", jitter=jitter / 10.0
                ) from None


def draw_minimizer_samples(model, support: SupportSet, n_samples, seed=None):
    """Tally which support point attains the minimum in joint posterior draws.

    Each draw picks a hyperparameter component uniformly, then a joint
    Gaussian sample of the function values over all support points.
    """
    rng = np.random.default_rng(seed)
    gps = _draw_gps(model)
    m = support.m
    counts = np.zeros(m, dtype=np.int64)
    split = rng.multinomial(n_samples, np.full(len(gps), 1.0 / len(gps)))
    for gp, n_k in zip(gps, split):
        if n_k == 0:
            continue
        mean, cov = gp.posterior(support.points, full_cov=True)
        L = _chol_with_ladder(cov, gp.spec.amplitude)
        draws = mean + rng.standard_normal((n_k, m)) @ L.T
        idx, tallies = np.unique(np.argmin(draws, axis=1), return_counts=True)
        counts[idx] += tallies
    support.counts = counts
    return counts


def wlh_support(model, domain, m, seed=None, n_starts=None):
    """End-to-end fast support draw: minima, components, weights, sampling.

    Falls back to uniform support (flagged) when no usable component exists.
    """
    cands = find_posterior_minima(model, domain, n_starts=n_starts, seed=seed)
    comps = []
    kept = []
    for cd in cands:
        comp = component_from_candidate(cd, domain)
        if comp is not None:
            comps.append(comp)
            kept.append(cd)
    if not comps:
        rng = np.random.default_rng(seed)
        domain = np.asarray(domain, dtype=float)
        pts = rng.uniform(domain[:, 0], domain[:, 1], size=(m, domain.shape[0]))
        return SupportSet(points=pts, flags={"uniform_fallback": True})
    w = compute_weights(kept)
    for comp, wi in zip(comps, w):
        comp.weight = wi
    out = draw_support(comps, m, domain, seed=seed)
    out.flags["n_components"] = len(comps)
    return out


def baseline_sampler(model, domain, m, method, seed=None, *, burn_in=100, thin=10, beta=3.0):
    """Support draws via slice sampling on an acquisition surface, or uniform.

    ``method`` is one of "ei-slice", "lcb-slice", "uniform".  The EI surface
    falls back to the LCB surface (flagged) when numerically zero everywhere
    probed.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    domain = np.asarray(domain, dtype=float)
    lo, hi = domain[:, 0], domain[:, 1]
    d = domain.shape[0]
    if method == "uniform":
        return SupportSet(points=rng.uniform(lo, hi, size=(m, d)))

    mp = model if isinstance(model, MarginalPosterior) else None
    if mp is None:
        raise TypeError("ei-slice/lcb-slice need a MarginalPosterior model")
    gps = mp.hps.gps
    y_vals = [g.y[g.kinds[:, 0] == 0] for g in gps if g.n]
    best = float(min(v.min() for v in y_vals if v.size)) if any(v.size for v in y_vals) else 0.0

    flags = {}
    surface = method
    if method == "ei-slice":
        sob = qmc.Sobol(d, scramble=True, seed=seed)
        probes = qmc.scale(sob.random(32), lo, hi)
        if np.all(mp.expected_improvement(probes, best) < 1e-300):
            surface = "lcb-slice"
            flags["ei_zero_fallback"] = True
    elif method != "lcb-slice":
        raise ValueError(f"unknown method {method!r}")

    if surface == "ei-slice":

        def logdensity(x):
            if np.any(x < lo) or np.any(x > hi):
                return -np.inf
            ei = mp.expected_improvement(x[None], best)[0]
            return np.log(ei) if ei > 0 else -np.inf

    else:

        def logdensity(x):
            if np.any(x < lo) or np.any(x > hi):
                return -np.inf
            return -mp.lower_confidence_bound(x[None], beta)[0]

    init = 0.5 * (lo + hi)
    if not np.isfinite(logdensity(init)):
        # Start from the best in-domain probe instead of the center.
        sob = qmc.Sobol(d, scramble=True, seed=seed)
        probes = qmc.scale(sob.random(64), lo, hi)
        scores = [logdensity(p) for p in probes]
        init = probes[int(np.argmax(scores))]
    pts = slice_sample(
        logdensity,
        init,
        m,
        burn_in=burn_in,
        thin=thin,
        step_width=(hi - lo) / 4.0,
        rng=rng,
    )
    return SupportSet(points=np.clip(pts, lo, hi), flags=flags)


def sampler_metrics(counts, m, n_total, elapsed):
    """Validation metrics for a support set given its argmin tallies.

    The multinomial is the Dirichlet-MAP fit with symmetric concentration
    1 + 1/m, so uniform counts give exactly zero divergence.  A point is
    useful when its tally reaches N/(10 m); the useful rate discounts the
    first point, which alone carries no information about the minimizer.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape[0] != m:
        raise ValueError("counts length must equal m")
    if counts.sum() != n_total:
        raise ValueError("counts must sum to the number of posterior draws")
    p_hat = (counts + 1.0 / m) / (n_total + 1.0)
    kl = float(np.sum(np.log((1.0 / m) / p_hat)) / m)
    unused_pct = 100.0 * float(np.sum(counts == 0)) / m
    n_useful = int(np.sum(counts >= n_total / (10.0 * m)))
    useful_rate = (n_useful - 1) / elapsed if elapsed > 0 else float("inf")
    return {
        "kl": kl,
        "unused_pct": unused_pct,
        "time": elapsed,
        "useful_rate": useful_rate,
        "n_useful": n_useful,
    }
