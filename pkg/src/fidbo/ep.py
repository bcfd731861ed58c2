"""Conditioning a joint Gaussian on minimizing conditions at a point.

The block covers the vector [f(x), grad f(x), diag Hess f(x), upper-triangle
off-diagonal Hess f(x)] at a candidate minimizer.  Being a minimizer imposes
equalities (gradient components and off-diagonal Hessian entries are zero)
and inequalities (diagonal Hessian entries nonnegative, optionally the value
lying below the incumbent best).  Equalities are absorbed by exact Gaussian
conditioning; inequalities by Expectation Propagation with damped site
updates and truncated-normal moment matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx
from scipy.stats import norm

from .errors import NegligibleMassError

__all__ = [
    "truncated_moments",
    "ConstraintBlock",
    "block_layout",
    "EPResult",
    "ep_condition",
]

_LOG_MASS_FLOOR = np.log(1e-300)
_SQRT_2 = np.sqrt(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def truncated_moments(mu, var, bound, side):
    """First two moments of a one-sided truncated Gaussian.

    ``side`` is "le" for X <= bound or "ge" for X >= bound.  Raises
    :class:`NegligibleMassError` when the feasible mass falls below 1e-300.
    """
    if var <= 0:
        raise ValueError("variance must be positive")
    sd = np.sqrt(var)
    if side == "le":
        beta = (mu - bound) / sd
        sign = -1.0
    elif side == "ge":
        beta = (bound - mu) / sd
        sign = 1.0
    else:
        raise ValueError(f"side must be 'le' or 'ge', got {side!r}")
    log_mass = norm.logsf(beta)
    if log_mass < _LOG_MASS_FLOOR:
        raise NegligibleMassError(
            f"truncation keeps less than 1e-300 mass (log-mass {log_mass:.1f})"
        )
    # Hazard of the standard normal, stable for arbitrarily deep truncation.
    hazard = _SQRT_2_OVER_PI / erfcx(beta / _SQRT_2)
    mean = mu + sign * sd * hazard
    var_t = var * (1.0 - hazard * (hazard - beta))
    return mean, max(var_t, 1e-300 * var)


def block_layout(d):
    """Index layout of the constraint vector for input dimension d.

    Returns (value_idx, grad_idx, hess_diag_idx, hess_offdiag_idx, size).
    """
    value = 0
    grads = list(range(1, 1 + d))
    diag = list(range(1 + d, 1 + 2 * d))
    off = list(range(1 + 2 * d, 1 + 2 * d + d * (d - 1) // 2))
    return value, grads, diag, off, 1 + 2 * d + d * (d - 1) // 2


@dataclass
class ConstraintBlock:
    """Joint Gaussian over the minimizing-condition vector at one point.

    ``equalities`` lists coordinates pinned to zero; ``inequalities`` lists
    (index, bound, side) factors.  Both default (when None) to the standard
    minimizing conditions: gradient components and off-diagonal Hessian
    entries zero, diagonal Hessian entries nonnegative, plus f(x) <= y_min
    when ``y_min`` is given.  Pass empty lists to impose nothing.
    """

    mean: np.ndarray
    cov: np.ndarray
    dim: int
    y_min: float | None = None
    equalities: list | None = None
    inequalities: list | None = None

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        _, _, _, _, m = block_layout(self.dim)
        if self.mean.shape != (m,) or self.cov.shape != (m, m):
            raise ValueError(
                f"block for dim {self.dim} needs mean ({m},) and cov ({m},{m})"
            )
        if not np.allclose(self.cov, self.cov.T, atol=1e-8):
            raise ValueError("block covariance must be symmetric")
        for i, _, side in self.inequality_sites():
            if not 0 <= i < m:
                raise ValueError(f"inequality index {i} outside block")
            if side not in ("le", "ge"):
                raise ValueError(f"bad inequality side {side!r}")
        if any(not 0 <= i < m for i in self.equality_indices()):
            raise ValueError("equality index outside block")

    def equality_indices(self):
        if self.equalities is not None:
            return list(self.equalities)
        _, grads, _, off, _ = block_layout(self.dim)
        return grads + off

    def inequality_sites(self):
        """List of (index, bound, side) inequality factors."""
        if self.inequalities is not None:
            return list(self.inequalities)
        value, _, diag, _, _ = block_layout(self.dim)
        sites = [(i, 0.0, "ge") for i in diag]
        if self.y_min is not None:
            sites.append((value, float(self.y_min), "le"))
        return sites


@dataclass
class EPResult:
    mean: np.ndarray
    cov: np.ndarray
    converged: bool
    iterations: int
    dropped_sites: int = 0
    skipped_updates: int = 0


def _condition_on_zeros(mean, cov, idx):
    """Exactly condition a Gaussian on the listed coordinates being zero.

    Returns full-size moments with the conditioned coordinates pinned
    (zero mean, zero variance, zero cross-covariance).
    """
    m = mean.shape[0]
    keep = [i for i in range(m) if i not in set(idx)]
    if not idx:
        return mean.copy(), cov.copy(), keep
    A = np.asarray(idx)
    B = np.asarray(keep)
    Caa = cov[np.ix_(A, A)]
    Caa = Caa + 1e-12 * max(np.trace(Caa) / len(A), 1e-300) * np.eye(len(A))
    sol = np.linalg.solve(Caa, np.column_stack([mean[A], cov[np.ix_(A, B)]]))
    mean_out = np.zeros(m)
    cov_out = np.zeros((m, m))
    if len(B):
        mean_out[B] = mean[B] - cov[np.ix_(B, A)] @ sol[:, 0]
        cond = cov[np.ix_(B, B)] - cov[np.ix_(B, A)] @ sol[:, 1:]
        cov_out[np.ix_(B, B)] = 0.5 * (cond + cond.T)
    return mean_out, cov_out, keep


def ep_condition(block: ConstraintBlock, *, damping=0.5, max_iters=50, tol=1e-6):
    """Gaussian approximation to the block conditioned on its constraints.

    Equalities first (exact), then damped EP sweeps over the inequality
    sites.  Sites whose truncation mass underflows twice are dropped.
    """
    mean0, cov0, keep = _condition_on_zeros(
        block.mean, block.cov, block.equality_indices()
    )
    sites = block.inequality_sites()
    if not sites:
        return EPResult(mean0, cov0, converged=True, iterations=0)

    # EP runs in the subspace of unpinned coordinates.
    B = np.asarray(keep)
    pos = {g: i for i, g in enumerate(keep)}
    mu_p = mean0[B]
    S_p = cov0[np.ix_(B, B)]
    nb = len(B)
    jitter = 1e-12 * max(np.trace(S_p) / nb, 1e-300)
    P_p = np.linalg.inv(S_p + jitter * np.eye(nb))
    r_p = P_p @ mu_p

    site_idx = [pos[i] for i, _, _ in sites]
    tau = np.zeros(len(sites))
    nu = np.zeros(len(sites))
    active = np.ones(len(sites), dtype=bool)
    mass_fail = np.zeros(len(sites), dtype=int)
    dropped = 0
    skipped = 0

    def recompute():
        P = P_p.copy()
        r = r_p.copy()
        for s, (j, t, v) in enumerate(zip(site_idx, tau, nu)):
            if active[s]:
                P[j, j] += t
                r[j] += v
        S = np.linalg.inv(P + jitter * np.eye(nb))
        S = 0.5 * (S + S.T)
        return S @ r, S

    mu, S = recompute()
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        delta = 0.0
        for s, (j, bound, side) in enumerate(
            (pos[i], b, sd) for i, b, sd in sites
        ):
            if not active[s]:
                continue
            v_i = S[j, j]
            m_i = mu[j]
            tau_cav = 1.0 / v_i - tau[s]
            if tau_cav <= 0:
                skipped += 1
                continue
            nu_cav = m_i / v_i - nu[s]
            v_cav = 1.0 / tau_cav
            m_cav = nu_cav * v_cav
            try:
                m_t, v_t = truncated_moments(m_cav, v_cav, bound, side)
            except NegligibleMassError:
                mass_fail[s] += 1
                if mass_fail[s] >= 2:
                    active[s] = False
                    dropped += 1
                else:
                    skipped += 1
                continue
            tau_new = max(1.0 / v_t - tau_cav, 0.0)
            nu_new = m_t / v_t - nu_cav
            d_tau = damping * (tau_new - tau[s])
            d_nu = damping * (nu_new - nu[s])
            delta = max(delta, abs(d_tau), abs(d_nu))
            tau[s] += d_tau
            nu[s] += d_nu
        mu, S = recompute()
        if delta < tol:
            converged = True
            break

    m = block.mean.shape[0]
    mean_out = np.zeros(m)
    cov_out = np.zeros((m, m))
    mean_out[B] = mu
    cov_out[np.ix_(B, B)] = S
    return EPResult(
        mean_out,
        cov_out,
        converged=converged,
        iterations=it,
        dropped_sites=dropped,
        skipped_updates=skipped,
    )
