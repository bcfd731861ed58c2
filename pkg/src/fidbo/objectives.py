"""Benchmark objectives, fidelity transforms, and simulated cost curves.

Objectives expose ``evaluate(x, s)`` over the augmented space: ``s = 0`` is
always the unmodified function.  The fidelity axis either does nothing
("none"), adds a smooth location-dependent shift growing linearly in s
("linear-shift"), or, for sampled-function objectives, is a genuine input
dimension of one fixed random draw realized lazily by exact sequential
conditioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import ConfigError
from .kernels import KernelSpec, cov_values

__all__ = [
    "branin",
    "hartmann3",
    "hartmann6",
    "LazyGPDraw",
    "Objective",
    "get_objective",
    "get_cost",
    "CostCurve",
]

BRANIN_DOMAIN = np.array([[-5.0, 10.0], [0.0, 15.0]])
BRANIN_FSTAR = 0.39788735772973816
BRANIN_XSTAR = np.array([-np.pi, 12.275])


def branin(x):
    x1, x2 = x[0], x[1]
    a, b, c = 1.0, 5.1 / (4 * np.pi**2), 5.0 / np.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * np.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array(
    [[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]]
)
_H3_P = 1e-4 * np.array(
    [
        [3689, 1170, 2673],
        [4699, 4387, 7470],
        [1091, 8732, 5547],
        [381, 5743, 8828],
    ]
)

HARTMANN3_DOMAIN = np.array([[0.0, 1.0]] * 3)
HARTMANN3_FSTAR = -3.86278214782076
HARTMANN3_XSTAR = np.array([0.114614, 0.555649, 0.852547])


def hartmann3(x):
    x = np.asarray(x, dtype=float)
    inner = np.sum(_H3_A * (x - _H3_P) ** 2, axis=1)
    return -float(np.sum(_H3_ALPHA * np.exp(-inner)))


_H6_ALPHA = _H3_ALPHA
_H6_A = np.array(
    [
        [10, 3, 17, 3.5, 1.7, 8],
        [0.05, 10, 17, 0.1, 8, 14],
        [3, 3.5, 1.7, 10, 17, 8],
        [17, 8, 0.05, 10, 0.1, 14],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)

HARTMANN6_DOMAIN = np.array([[0.0, 1.0]] * 6)
HARTMANN6_FSTAR = -3.3223680114155156
HARTMANN6_XSTAR = np.array(
    [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]
)


def hartmann6(x):
    x = np.asarray(x, dtype=float)
    inner = np.sum(_H6_A * (x - _H6_P) ** 2, axis=1)
    return -float(np.sum(_H6_ALPHA * np.exp(-inner)))


class LazyGPDraw:
    """One fixed random function drawn lazily from a Matérn 5/2 prior.

    Values are realized on demand by exact sequential conditioning on all
    previously revealed points; an exact repeat query returns the cached
    value.  The draw is a deterministic function of (seed, query order).
    The cache can be persisted so separate processes reveal the same
    function.
    """

    _JITTER = 1e-12

    def __init__(self, dim, lengthscales, seed, amplitude=1.0):
        self.dim = dim
        self.spec = KernelSpec(
            amplitude, np.broadcast_to(np.asarray(lengthscales, float), (dim,)).copy()
        )
        self.seed = int(seed)
        self.X = np.zeros((0, dim))
        self.y = np.zeros(0)
        self.L = np.zeros((0, 0))
        self._index = {}

    def _key(self, x):
        return np.round(x, 12).tobytes()

    def __call__(self, U):
        U = np.atleast_2d(np.asarray(U, dtype=float))
        out = np.empty(U.shape[0])
        fresh_rows = [
            i for i, u in enumerate(U) if self._key(u) not in self._index
        ]
        # Deduplicate within the batch, keeping first occurrence order.
        seen = {}
        new_idx = []
        for i in fresh_rows:
            k = self._key(U[i])
            if k not in seen:
                seen[k] = len(new_idx)
                new_idx.append(i)
        if new_idx:
            self._extend(U[new_idx])
        for i, u in enumerate(U):
            out[i] = self.y[self._index[self._key(u)]]
        return out

    def _extend(self, Xn):
        n_old = self.X.shape[0]
        n_new = Xn.shape[0]
        K22 = cov_values(Xn, Xn, self.spec)
        jit = self._JITTER * self.spec.amplitude
        # One innovation per revealed point, keyed by its position in the
        # cache, so splitting a query sequence into batches cannot change
        # the realized function.
        z = np.array(
            [
                np.random.default_rng(
                    np.random.SeedSequence([self.seed, n_old + i])
                ).standard_normal()
                for i in range(n_new)
            ]
        )
        if n_old:
            K12 = cov_values(self.X, Xn, self.spec)
            V = solve_triangular(self.L, K12, lower=True)
            w = solve_triangular(self.L, self.y, lower=True)
            mean = V.T @ w
            cov = K22 - V.T @ V
        else:
            mean = np.zeros(n_new)
            cov = K22
        L22 = np.linalg.cholesky(cov + jit * np.eye(n_new))
        y_new = mean + L22 @ z
        L_full = np.zeros((n_old + n_new, n_old + n_new))
        L_full[:n_old, :n_old] = self.L
        if n_old:
            L_full[n_old:, :n_old] = V.T
        L_full[n_old:, n_old:] = L22
        self.L = L_full
        self.X = np.vstack([self.X, Xn])
        self.y = np.concatenate([self.y, y_new])
        for i, x in enumerate(Xn):
            self._index[self._key(x)] = n_old + i

    def save(self, path):
        # The Cholesky factor is rebuildable, and storing it would make the
        # file quadratic in the number of revealed points.
        np.savez(
            path,
            X=self.X,
            y=self.y,
            seed=self.seed,
            amplitude=self.spec.amplitude,
            lengthscales=self.spec.lengthscales,
        )

    @classmethod
    def load(cls, path):
        data = np.load(path)
        obj = cls(
            data["X"].shape[1],
            data["lengthscales"],
            int(data["seed"]),
            amplitude=float(data["amplitude"]),
        )
        obj.X = data["X"]
        obj.y = data["y"]
        n = obj.X.shape[0]
        if n:
            K = cov_values(obj.X, obj.X, obj.spec)
            obj.L = np.linalg.cholesky(
                K + cls._JITTER * obj.spec.amplitude * np.eye(n)
            )
        obj._index = {obj._key(x): i for i, x in enumerate(obj.X)}
        return obj


class _UnitField:
    """Smooth random direction field with unit root-mean-square scale."""

    def __init__(self, domain, seed):
        domain = np.asarray(domain, dtype=float)
        widths = domain[:, 1] - domain[:, 0]
        self.draw = LazyGPDraw(domain.shape[0], widths, seed)
        sob = qmc.Sobol(domain.shape[0], scramble=True, seed=seed)
        probes = qmc.scale(sob.random(128), domain[:, 0], domain[:, 1])
        vals = self.draw(probes)
        self.scale = 1.0 / max(float(np.sqrt(np.mean(vals**2))), 1e-12)

    def __call__(self, x):
        return float(self.draw(np.atleast_2d(x))[0]) * self.scale


@dataclass
class Objective:
    """An evaluable objective over the augmented (x, s) space."""

    name: str
    dim: int
    domain: np.ndarray
    fn: object  # x -> value at s = 0 (analytic case) or None (gp-draw)
    f_star: float | None = None
    x_star: np.ndarray | None = None
    transform: str = "none"
    shift_scale: float = 0.0
    shift_field: object | None = None
    gp_draw: LazyGPDraw | None = None

    def evaluate(self, x, s=0.0):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[0] != self.dim:
            raise ConfigError(
                f"{self.name}: point has dimension {x.shape[0]}, expected {self.dim}"
            )
        if np.any(x < self.domain[:, 0] - 1e-12) or np.any(
            x > self.domain[:, 1] + 1e-12
        ):
            raise ConfigError(f"{self.name}: point {x} outside the search box")
        if not 0.0 <= s <= 1.0:
            raise ConfigError(f"fidelity s={s} outside [0, 1]")
        if self.gp_draw is not None:
            return float(self.gp_draw(np.append(x, s)[None])[0])
        y = float(self.fn(x))
        if self.transform == "linear-shift" and s > 0.0:
            y += self.shift_scale * s * self.shift_field(x)
        return y

    def estimate_f_star(self, n_grid=2500, n_polish=5, seed=0):
        """Dense-grid plus local-refinement minimum of the s=0 function.

        Mostly useful for gp-draw objectives, whose optimum depends on the
        realized draw.  Note that probing reveals more of a lazy draw.
        """
        sob = qmc.Sobol(self.dim, scramble=True, seed=seed)
        n_pow2 = 1 << (max(n_grid, 2) - 1).bit_length()
        grid = qmc.scale(sob.random(n_pow2)[:n_grid], self.domain[:, 0], self.domain[:, 1])
        if self.gp_draw is not None:
            # Reveal the whole grid in one batch; point-by-point
            # conditioning would be quadratically slower.
            U = np.column_stack([grid, np.zeros(grid.shape[0])])
            vals = self.gp_draw(U)
        else:
            vals = np.array([self.evaluate(x, 0.0) for x in grid])
        order = np.argsort(vals)
        best_val = vals[order[0]]
        best_x = grid[order[0]]
        for i in order[:n_polish]:
            res = minimize(
                lambda x: self.evaluate(np.clip(x, self.domain[:, 0], self.domain[:, 1]), 0.0),
                grid[i],
                method="Nelder-Mead",
                options={"maxiter": 100 * self.dim, "xatol": 1e-7, "fatol": 1e-12},
            )
            if res.fun < best_val:
                best_val = float(res.fun)
                best_x = np.clip(res.x, self.domain[:, 0], self.domain[:, 1])
        return best_val, best_x


def _range_estimate(fn, domain, seed=1234):
    sob = qmc.Sobol(domain.shape[0], scramble=True, seed=seed)
    probes = qmc.scale(sob.random(512), domain[:, 0], domain[:, 1])
    vals = np.array([fn(x) for x in probes])
    return float(vals.max() - vals.min())


_ANALYTIC = {
    "branin": (branin, BRANIN_DOMAIN, BRANIN_FSTAR, BRANIN_XSTAR),
    "hartmann3": (hartmann3, HARTMANN3_DOMAIN, HARTMANN3_FSTAR, HARTMANN3_XSTAR),
    "hartmann6": (hartmann6, HARTMANN6_DOMAIN, HARTMANN6_FSTAR, HARTMANN6_XSTAR),
}


def get_objective(
    name,
    *,
    transform="none",
    shift_scale=None,
    seed=0,
    dim=2,
    lengthscale=0.3,
    l_ev=0.5,
    amplitude=1.0,
):
    """Construct an objective by id.

    Analytic ids: branin, hartmann3, hartmann6 (optionally with the
    linear-shift fidelity transform; default shift is 10% of the function's
    probed range).  "gp-draw" realizes one random function over (x, s) on
    [-1, 1]^dim with the given x-lengthscale and fidelity lengthscale l_ev.
    """
    if name in _ANALYTIC:
        fn, domain, f_star, x_star = _ANALYTIC[name]
        obj = Objective(
            name, domain.shape[0], domain.copy(), fn, f_star, x_star.copy()
        )
        if transform == "linear-shift":
            if shift_scale is None:
                shift_scale = 0.1 * _range_estimate(fn, domain)
            obj.transform = "linear-shift"
            obj.shift_scale = float(shift_scale)
            obj.shift_field = _UnitField(domain, seed)
        elif transform != "none":
            raise ConfigError(f"unknown fidelity transform {transform!r}")
        return obj
    if name == "gp-draw":
        ls = [lengthscale] * dim + [l_ev]
        draw = LazyGPDraw(dim + 1, ls, seed, amplitude=amplitude)
        domain = np.array([[-1.0, 1.0]] * dim)
        return Objective(
            f"gp-draw-{dim}d", dim, domain, None, None, None, gp_draw=draw
        )
    raise ConfigError(
        f"unknown objective {name!r}; valid: branin, hartmann3, hartmann6, gp-draw"
    )


@dataclass
class CostCurve:
    """Simulated evaluation cost in seconds as a function of fidelity."""

    name: str
    fn: object

    def __call__(self, s):
        c = float(self.fn(float(s)))
        if c <= 0:
            raise ConfigError(f"cost curve {self.name} returned {c} <= 0")
        return c


def get_cost(name, *, l_c=3.0, min_cost=120.0, max_cost=1800.0):
    """Cost curve by id: exponential exp(-l_c s) or quadratic ramp.

    The quadratic curve falls from max_cost at full fidelity (s=0) to
    min_cost at s=1.
    """
    if name == "exponential":
        return CostCurve("exponential", lambda s: float(np.exp(-l_c * s)))
    if name == "quadratic":
        span = max_cost - min_cost
        return CostCurve("quadratic", lambda s: min_cost + span * (1.0 - s) ** 2)
    if name == "constant":
        return CostCurve("constant", lambda s: float(max_cost))
    raise ConfigError(
        f"unknown cost curve {name!r}; valid: exponential, quadratic, constant"
    )
