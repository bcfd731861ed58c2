"""Information-per-cost acquisition over the augmented (x, s) space.

For each hyperparameter draw, minimizer locations are sampled from the
support-point approximation of the minimizer distribution and the posterior
at each is conditioned on the minimizing conditions (see :mod:`fidbo.ep`).
The score of a candidate is the expected drop in predictive entropy of its
observation caused by that conditioning, averaged over hyperparameter and
minimizer draws, divided by the candidate's predicted cost share.

The variance reduction uses exact linear-Gaussian algebra on the joint
posterior of [y(candidate), constraint block]: with prior block covariance V
and conditioned block covariance S, the candidate's conditioned variance is
``v - c V^{-} c^T + (c V^{-}) S (V^{-} c^T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .ep import ConstraintBlock, block_layout, ep_condition
from .errors import AcquisitionUnavailableError
from .gp import GP
from .kernels import VALUE, KernelSpec, encode_kinds, grad, hess

__all__ = [
    "gaussian_entropy",
    "MinimizerDraw",
    "AcquisitionContext",
    "build_context",
    "delta_entropy",
    "acquisition",
    "optimize_acquisition",
    "SlicedGP",
]

_TWO_PI_E = 2.0 * np.pi * np.e


def gaussian_entropy(variance):
    """Differential entropy of a Gaussian, 0.5*log(2*pi*e*variance)."""
    if variance <= 0:
        raise ValueError("variance must be positive")
    return 0.5 * np.log(_TWO_PI_E * variance)


class SlicedGP:
    """A GP over (x, s) viewed as a function of x at fixed fidelity.

    Derivative kinds refer to x coordinates, which occupy the leading input
    dimensions of the augmented model.
    """

    def __init__(self, base: GP, s=0.0):
        self.base = base
        self.s = float(s)
        d = base.dim - 1
        self.spec = KernelSpec(
            base.spec.amplitude, base.spec.lengthscales[:d], noise_sd=base.spec.noise_sd
        )

    @property
    def n(self):
        return self.base.n

    @property
    def dim(self):
        return self.base.dim - 1

    def _lift(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        return np.column_stack([Xq, np.full(Xq.shape[0], self.s)])

    def posterior(self, Xq, kinds_q=None, full_cov=False):
        return self.base.posterior(self._lift(Xq), kinds_q, full_cov=full_cov)

    def mean_and_grad(self, x):
        m, g = self.base.mean_and_grad(np.append(np.asarray(x, float), self.s))
        return m, g[: self.dim]


@dataclass
class MinimizerDraw:
    """One minimizer location with its conditioned block precomputations."""

    x_d: np.ndarray
    block_X: np.ndarray
    block_kinds: np.ndarray
    W: np.ndarray  # pseudo-inverse of the prior block covariance
    M: np.ndarray  # W @ S_conditioned @ W
    valid: bool = True
    ep_converged: bool = True


@dataclass
class AcquisitionContext:
    gps: list
    draws: list  # draws[k] = list of MinimizerDraw for gps[k]
    global_min_constraint: bool = True
    clamp_tol: float = 1e-6
    stats: dict = field(default_factory=dict)

    @property
    def n_valid(self):
        return sum(1 for ds in self.draws for dr in ds if dr.valid)


def _block_queries(x_d, d, model_dim, s_plane=0.0):
    """Locations and kinds of the constraint block in model input space."""
    kinds = [VALUE] + [grad(i) for i in range(d)]
    kinds += [hess(i, i) for i in range(d)]
    kinds += [hess(i, j) for i in range(d) for j in range(i + 1, d)]
    kq = encode_kinds(kinds)
    x_d = np.asarray(x_d, dtype=float)
    if model_dim == d + 1:
        loc = np.append(x_d, s_plane)
    else:
        loc = x_d
    X = np.tile(loc, (len(kinds), 1))
    return X, kq


def _pinv_psd(A, rel_floor=1e-12):
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    wmax = max(w.max(), 0.0)
    inv = np.where(w > rel_floor * max(wmax, 1e-300), 1.0 / w, 0.0)
    return (V * inv) @ V.T


def _y_min(gp):
    mask = gp.kinds[:, 0] == 0
    return float(gp.y[mask].min()) if mask.any() else None


def build_context(
    gps,
    support,
    d,
    *,
    n_min_draws=10,
    global_min_constraint=True,
    seed=None,
    max_retries=3,
    ep_damping=0.5,
    ep_max_iters=50,
):
    """Sample minimizer draws per hyper draw and condition each by EP.

    ``support`` provides minimizer locations (points weighted by argmin
    counts when present).  ``d`` is the dimension of the minimizer plane;
    models may live in d or d+1 (augmented) input dimensions.
    """
    rng = np.random.default_rng(seed)
    pts = support.points
    counts = getattr(support, "counts", None)
    if counts is not None and np.sum(counts) > 0:
        probs = np.asarray(counts, dtype=float) / np.sum(counts)
    else:
        probs = np.full(pts.shape[0], 1.0 / pts.shape[0])

    _, _, _, _, mb = block_layout(d)
    all_draws = []
    ep_failures = 0
    nonconverged = 0
    for gp in gps:
        y_min = _y_min(gp) if global_min_constraint else None
        draws_k = []
        for _ in range(n_min_draws):
            ok = None
            for _try in range(max_retries):
                x_d = pts[rng.choice(pts.shape[0], p=probs)]
                X, kq = _block_queries(x_d, d, gp.dim)
                mean, cov = gp.posterior(X, kq, full_cov=True)
                try:
                    block = ConstraintBlock(mean, cov, d, y_min=y_min)
                    res = ep_condition(
                        block, damping=ep_damping, max_iters=ep_max_iters
                    )
                except Exception:
                    ep_failures += 1
                    continue
                W = _pinv_psd(cov)
                M = W @ res.cov @ W
                ok = MinimizerDraw(
                    np.asarray(x_d, float).copy(), X, kq, W, M,
                    valid=True, ep_converged=res.converged,
                )
                if not res.converged:
                    nonconverged += 1
                break
            if ok is not None:
                draws_k.append(ok)
        all_draws.append(draws_k)
    ctx = AcquisitionContext(
        list(gps), all_draws, global_min_constraint=global_min_constraint
    )
    ctx.stats["ep_failures"] = ep_failures
    ctx.stats["ep_nonconverged"] = nonconverged
    ctx.stats["clamped"] = 0
    return ctx


def delta_entropy(ctx: AcquisitionContext, candidates):
    """Mean entropy drop of the candidate observations, clamped at zero.

    Vectorized over candidates; the expectation runs over hyperparameter
    draws (uniform) and their valid minimizer draws.
    """
    cands = np.atleast_2d(np.asarray(candidates, dtype=float))
    n_c = cands.shape[0]
    if ctx.n_valid == 0:
        raise AcquisitionUnavailableError("no valid minimizer draw in context")
    rows = []
    for gp, draws in zip(ctx.gps, ctx.draws):
        valid = [dr for dr in draws if dr.valid]
        if not valid:
            continue
        noise2 = gp.spec.noise_sd**2
        kq_c = encode_kinds([VALUE] * n_c)
        v_f = None
        dead = None
        logs = np.zeros(n_c)
        # One stacked call per minimizer draw: candidate-candidate and
        # candidate-block covariances are supported everywhere, while
        # blocks of distinct draws would need Hessian cross-covariances
        # at separated points, which the kernel does not define.
        for dr in valid:
            mb = dr.block_X.shape[0]
            Xq = np.vstack([cands, dr.block_X])
            kq = np.vstack([kq_c, dr.block_kinds])
            _, cov = gp.posterior(Xq, kq, full_cov=True)
            if v_f is None:
                v_f = np.maximum(np.diag(cov)[:n_c], 0.0)
                v0 = v_f + noise2
                # An already-determined candidate (zero predictive
                # variance, no noise) carries no entropy to remove.
                dead = v0 <= 1e-15 * gp.spec.amplitude
            C = cov[:n_c, n_c : n_c + mb]
            drop = np.einsum("ij,ij->i", C @ dr.W, C)
            v_c = v_f - drop + np.einsum("ij,ij->i", C @ dr.M, C)
            v_c = np.maximum(v_c, 1e-12 * np.maximum(v0, 1e-300)) + noise2
            with np.errstate(divide="ignore", invalid="ignore"):
                term = 0.5 * np.log(v0 / v_c)
            logs += np.where(dead, 0.0, term)
        rows.append(logs / len(valid))
    per_gp = np.array(rows)
    dh = per_gp.mean(axis=0)
    n_clamped = int(np.sum(dh < -ctx.clamp_tol))
    ctx.stats["clamped"] = ctx.stats.get("clamped", 0) + n_clamped
    return np.maximum(dh, 0.0)


def acquisition(ctx, candidates, cost_divisor):
    """Entropy drop per unit cost."""
    dh = delta_entropy(ctx, candidates)
    div = np.asarray(cost_divisor, dtype=float)
    if np.any(div <= 0):
        raise ValueError("cost divisor must be positive")
    return dh / div


def _tie_key(alpha, point):
    return (-alpha, point[-1], tuple(point[:-1]))


def optimize_acquisition(
    ctx,
    domain,
    divisor_fn=None,
    *,
    seed=None,
    support_points=None,
    fixed_s=None,
    n_grid=None,
    polish=True,
):
    """Global maximization of the acquisition over the augmented box.

    Candidates: a scrambled-Sobol grid of size 100*(d+1), plus any support
    points lifted to a coarse fidelity grid, followed by a local polish from
    the best grid point.  Ties resolve to the lowest fidelity, then
    lexicographically smallest location.  Returns (point, info).
    """
    domain = np.asarray(domain, dtype=float)
    dim = domain.shape[0]
    if n_grid is None:
        n_grid = 100 * dim
    sob = qmc.Sobol(dim, scramble=True, seed=seed)
    n_pow2 = 1 << (n_grid - 1).bit_length()
    cands = qmc.scale(sob.random(n_pow2)[:n_grid], domain[:, 0], domain[:, 1])
    if fixed_s is not None:
        cands[:, -1] = fixed_s
    if support_points is not None and len(support_points):
        sp = np.atleast_2d(np.asarray(support_points, dtype=float))
        if sp.shape[1] == dim - 1:
            # Location-only points: lift onto a coarse fidelity grid.
            s_grid = [fixed_s] if fixed_s is not None else np.linspace(0, 1, 5)
            sp = np.vstack(
                [np.column_stack([sp, np.full(sp.shape[0], s)]) for s in s_grid]
            )
        lifted = np.clip(sp, domain[:, 0], domain[:, 1])
        cands = np.vstack([cands, lifted])

    info = {"fallback_max_variance": False}
    if divisor_fn is None:
        div = np.ones(cands.shape[0])
    else:
        div = np.array([divisor_fn(u) for u in cands], dtype=float)
    try:
        alpha = delta_entropy(ctx, cands) / div
        unavailable = False
    except AcquisitionUnavailableError:
        unavailable = True
    if unavailable:
        # No usable minimizer draws this step: chase predictive variance.
        info["fallback_max_variance"] = True
        var = np.zeros(cands.shape[0])
        for gp in ctx.gps:
            var += gp.posterior(cands)[1]
        alpha = var / len(ctx.gps)

    best_alpha = alpha.max()
    eps = 1e-12 * max(1.0, abs(best_alpha))
    tied = np.flatnonzero(alpha >= best_alpha - eps)
    best_i = min(tied, key=lambda i: _tie_key(alpha[i], cands[i]))
    best = cands[best_i].copy()
    best_val = alpha[best_i]

    if polish and not unavailable:

        def neg_alpha(u):
            u = np.clip(u, domain[:, 0], domain[:, 1])
            if fixed_s is not None:
                u = u.copy()
                u[-1] = fixed_s
            val = delta_entropy(ctx, u[None])[0]
            if divisor_fn is not None:
                val = val / divisor_fn(u)
            return -val

        res = minimize(
            neg_alpha, best, method="Nelder-Mead",
            options={"maxiter": 50 * dim, "xatol": 1e-4, "fatol": 1e-10},
        )
        if -res.fun > best_val:
            polished = np.clip(res.x, domain[:, 0], domain[:, 1])
            if fixed_s is not None:
                polished[-1] = fixed_s
            best = polished
            best_val = -res.fun

    info["alpha"] = best_val
    info["candidates"] = cands
    info["alphas"] = alpha
    return best, info
