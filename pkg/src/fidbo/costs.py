"""Cost modelling and budget accounting for the acquisition divisor.

Two models feed the divisor: a GP over log evaluation cost in the augmented
(x, s) space with MAP hyperparameters, and a power-plus-constant growth law
``overhead(n) = theta0 + theta1 * n**theta2 + eps`` for the per-step
optimizer overhead, fit as a MAP under independent Gamma priors.  The
divisor for a candidate is its predicted evaluation cost plus the average
predicted overhead over the steps the remaining budget can still afford.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InvalidRecordError
from .gp import Observation, fit_gp
from .hyper import HyperPrior
from .kernels import VALUE

__all__ = [
    "CostGP",
    "OverheadModel",
    "fit_cost_gp",
    "fit_overhead_map",
    "remaining_steps",
    "acquisition_divisor",
    "FixedCostModel",
]

_STEP_CAP = 1_000_000
_THETA3_FLOOR = 1e-6


@dataclass
class CostGP:
    """GP over log evaluation cost with MAP hyperparameters."""

    gp: object
    map_log_params: np.ndarray

    def predict(self, U):
        """Predicted cost exp(posterior mean of log cost); always positive."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        mean, _ = self.gp.posterior(U)
        return np.exp(mean)

    def predict_one(self, u):
        return float(self.predict(np.atleast_2d(u))[0])


class FixedCostModel:
    """Adapter exposing a known cost function through the CostGP interface."""

    def __init__(self, fn):
        self.fn = fn

    def predict(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        return np.array([float(self.fn(u)) for u in U])

    def predict_one(self, u):
        return float(self.fn(np.asarray(u, dtype=float)))


def fit_cost_gp(records, *, n_restarts=5, seed=0) -> CostGP:
    """Fit the log-cost GP at MAP hyperparameters (multi-start local search)."""
    records = list(records)
    if len(records) < 2:
        raise InvalidRecordError("need at least two cost records")
    U = np.atleast_2d(np.array([np.asarray(u, dtype=float) for u, _ in records]))
    c = np.array([cost for _, cost in records], dtype=float)
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise InvalidRecordError("evaluation costs must be positive and finite")
    z = np.log(c)
    prior = HyperPrior.from_data(U, z)
    obs = [Observation(u, VALUE, zi) for u, zi in zip(U, z)]

    def neg_log_post(theta):
        if np.any(np.abs(theta) > 50.0):
            return 1e12
        try:
            spec = prior.to_spec(theta)
            lml = fit_gp(obs, spec).log_marginal_likelihood()
        except Exception:
            return 1e12
        return -(lml + prior.log_prior(theta))

    rng = np.random.default_rng(seed)
    starts = [prior.log_mean.copy()]
    starts += [
        prior.log_mean + 0.5 * rng.standard_normal(prior.log_mean.shape)
        for _ in range(n_restarts - 1)
    ]
    best = None
    for x0 in starts:
        res = minimize(neg_log_post, x0, method="L-BFGS-B")
        if best is None or res.fun < best.fun:
            best = res
    spec = prior.to_spec(best.x)
    return CostGP(gp=fit_gp(obs, spec), map_log_params=best.x.copy())


@dataclass
class OverheadModel:
    """Power-plus-constant overhead growth law with its fitted parameters."""

    theta: tuple
    history: list = field(default_factory=list)
    prior_only: bool = False

    def mean(self, n):
        """Noise-free predicted overhead at step n (vectorized)."""
        t0, t1, t2, _ = self.theta
        n = np.asarray(n, dtype=float)
        return t0 + t1 * n**t2


def _gamma_logpdf(x, shape, rate):
    return (shape - 1) * np.log(x) - rate * x


def _overhead_priors(history):
    h = np.asarray(history, dtype=float)
    med = float(np.median(h)) if h.size else 1.0
    med = max(med, 1e-6)
    sd = float(np.std(h)) if h.size > 1 else 0.0
    sd = max(sd, 0.05 * med, 1e-6)
    return [(2.0, 2.0 / med), (2.0, 20.0), (2.0, 1.0), (2.0, 2.0 / sd)]


def fit_overhead_map(history, *, n_restarts=5, seed=0) -> OverheadModel:
    """MAP fit of the overhead growth law.

    With fewer than three entries the data cannot identify the law; the
    prior-mode parameters are returned with ``prior_only=True``.
    """
    history = [float(v) for v in history]
    if any(v < 0 for v in history):
        raise InvalidRecordError("overheads must be nonnegative")
    priors = _overhead_priors(history)
    modes = np.array([(k - 1.0) / r for k, r in priors])
    if len(history) < 3:
        return OverheadModel(tuple(modes), history, prior_only=True)

    o = np.asarray(history)
    n = np.arange(len(o), dtype=float)

    def neg_log_post(u):
        # Extreme probe points overflow harmlessly; they map to the 1e12
        # barrier below.
        with np.errstate(all="ignore"):
            t = np.exp(u)
            t0, t1, t2, t3 = t
            resid = o - (t0 + t1 * n**t2)
            loglik = -len(o) * np.log(t3) - 0.5 * np.sum(resid**2) / t3**2
            logpri = sum(_gamma_logpdf(ti, k, r) for ti, (k, r) in zip(t, priors))
            val = -(loglik + logpri)
        return val if np.isfinite(val) else 1e12

    rng = np.random.default_rng(seed)
    base = np.log(np.maximum(modes, 1e-3))
    starts = [base] + [
        base + 0.7 * rng.standard_normal(4) for _ in range(n_restarts - 1)
    ]
    bounds = [(None, None)] * 3 + [(np.log(_THETA3_FLOOR), None)]
    best = None
    for x0 in starts:
        res = minimize(neg_log_post, x0, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    theta = tuple(np.exp(best.x))
    return OverheadModel(theta, history, prior_only=False)


def remaining_steps(model: OverheadModel, budget, c_eval):
    """Greatest N with the cumulative predicted spend through step N inside budget.

    The current step is step zero and at least it is always assumed to
    remain, so the result is never negative.
    """
    if budget < 0 or c_eval < 0:
        raise ValueError("budget and c_eval must be nonnegative")
    total = 0.0
    n = 0
    while n < _STEP_CAP:
        total += float(model.mean(n)) + c_eval
        if total > budget:
            break
        n += 1
    return max(n - 1, 0)


def acquisition_divisor(
    costgp, overhead: OverheadModel, candidate, budget, c_eval, *, floor_frac=1e-3
):
    """Predicted candidate cost plus average remaining overhead, floored.

    The floor is ``floor_frac`` times the predicted full-fidelity cost at the
    candidate's location (s = 0), guarding against vanishing cheap-fidelity
    costs blowing up the acquisition.
    """
    candidate = np.asarray(candidate, dtype=float)
    n_rem = remaining_steps(overhead, budget, c_eval)
    steps = np.arange(n_rem + 1)
    avg_overhead = float(np.mean(overhead.mean(steps)))
    c_here = costgp.predict_one(candidate)
    full = candidate.copy()
    full[-1] = 0.0
    floor = floor_frac * costgp.predict_one(full)
    return max(c_here + avg_overhead, floor, 1e-300)
