"""Sequential optimization loop over the augmented (x, s) search space.

Three modes share one loop skeleton:

* ``ei``      — expected improvement, full fidelity only (s = 0).
* ``pes``     — entropy-search acquisition, full fidelity only.
* ``envpes``  — entropy search over (x, s) divided by the predicted
                cost of the candidate plus amortized per-step overhead.

Each executed step appends one trace row holding the chosen point, the
observation, accounting columns, and an offline recommendation with its
regret.  Selection wall time is recorded per step; in simulated-cost mode
evaluation "time" is the declared cost of the chosen fidelity, so entire
cost-aware campaigns replay deterministically.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .acquisition import SlicedGP, build_context, optimize_acquisition
from .costs import acquisition_divisor, fit_cost_gp, fit_overhead_map
from .errors import ConfigError
from .gp import Observation
from .hyper import HyperPrior, MarginalPosterior, fit_hyper_posterior
from .objectives import Objective, get_cost, get_objective
from .support import find_posterior_minima, wlh_support, draw_minimizer_samples

__all__ = ["ExperimentConfig", "TraceRow", "Trace", "Optimizer", "run_experiment_single"]

_MODES = ("ei", "pes", "envpes")
_INIT_S_LEVELS = (0.5, 0.75, 0.875)


@dataclass
class ExperimentConfig:
    """Everything that determines a run, apart from the base seed."""

    objective: str = "branin"
    objective_params: dict = field(default_factory=dict)
    cost: str = "exponential"
    cost_params: dict = field(default_factory=dict)
    mode: str = "envpes"
    budget_s: float = 100.0
    max_steps: int = 200
    n_init: int = 20
    # model refit
    k_hyper: int = 4
    burn_in: int = 30
    thin: int = 3
    noise_sd: float | None = None
    # minimizer sampling
    m_support: int = 100
    n_min_samples: int = 1000
    n_min_draws: int = 10
    # accounting
    sim_scale: float = 1.0
    overhead_mode: str = "measured"
    overhead_params: tuple = (0.0, 0.0, 1.0)
    recommend_mode: str = "posterior"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.overhead_mode not in ("measured", "synthetic"):
            raise ConfigError(f"bad overhead_mode {self.overhead_mode!r}")
        if self.recommend_mode not in ("posterior", "argmin"):
            raise ConfigError(f"bad recommend_mode {self.recommend_mode!r}")
        if self.budget_s <= 0:
            raise ConfigError("budget_s must be positive")


@dataclass
class TraceRow:
    step: int
    x: np.ndarray
    s: float
    y: float
    eval_cost_s: float
    overhead_s: float
    x_rec: np.ndarray | None
    rec_mean: float
    rec_true: float
    immediate_regret: float
    argmin_regret: float
    cumulative_eval_cost_s: float
    cumulative_total_cost_s: float
    flags: tuple = ()


class Trace:
    """Ordered rows of a single run plus run-level metadata."""

    def __init__(self, dim, rows=None, meta=None):
        self.dim = dim
        self.rows = rows if rows is not None else []
        self.meta = meta if meta is not None else {}

    def columns(self):
        d = self.dim
        return (
            ["step"]
            + [f"x{i}" for i in range(d)]
            + ["s", "y", "eval_cost_s", "overhead_s"]
            + [f"rec_x{i}" for i in range(d)]
            + [
                "rec_mean",
                "rec_true",
                "immediate_regret",
                "argmin_regret",
                "cumulative_eval_cost_s",
                "cumulative_total_cost_s",
                "flags",
            ]
        )

    @staticmethod
    def _fmt(v):
        if v is None:
            return ""
        if isinstance(v, float) and np.isnan(v):
            return "nan"
        return repr(float(v))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for r in self.rows:
                rec = [""] * self.dim if r.x_rec is None else [self._fmt(v) for v in r.x_rec]
                w.writerow(
                    [r.step]
                    + [self._fmt(v) for v in r.x]
                    + [self._fmt(r.s), self._fmt(r.y), self._fmt(r.eval_cost_s), self._fmt(r.overhead_s)]
                    + rec
                    + [
                        self._fmt(r.rec_mean),
                        self._fmt(r.rec_true),
                        self._fmt(r.immediate_regret),
                        self._fmt(r.argmin_regret),
                        self._fmt(r.cumulative_eval_cost_s),
                        self._fmt(r.cumulative_total_cost_s),
                        ";".join(r.flags),
                    ]
                )

    @classmethod
    def load(cls, path):
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            dim = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
            tr = cls(dim)
            for row in rd:
                rec = row[dim + 5 : 2 * dim + 5]
                x_rec = None if rec[0] == "" else np.array([float(v) for v in rec])
                k = 2 * dim + 5
                tr.rows.append(
                    TraceRow(
                        step=int(row[0]),
                        x=np.array([float(v) for v in row[1 : 1 + dim]]),
                        s=float(row[1 + dim]),
                        y=float(row[2 + dim]),
                        eval_cost_s=float(row[3 + dim]),
                        overhead_s=float(row[4 + dim]),
                        x_rec=x_rec,
                        rec_mean=float(row[k]) if row[k] else np.nan,
                        rec_true=float(row[k + 1]) if row[k + 1] else np.nan,
                        immediate_regret=float(row[k + 2]) if row[k + 2] else np.nan,
                        argmin_regret=float(row[k + 3]) if row[k + 3] else np.nan,
                        cumulative_eval_cost_s=float(row[k + 4]),
                        cumulative_total_cost_s=float(row[k + 5]),
                        flags=tuple(f for f in row[k + 6].split(";") if f),
                    )
                )
        return tr


class _SliceView:
    """Model adapter exposing the s = 0 restriction of augmented-space draws."""

    def __init__(self, gps, s=0.0):
        self.gps = [SlicedGP(g, s) for g in gps]


class Optimizer:
    def __init__(self, config: ExperimentConfig, objective: Objective = None, cost=None):
        self.config = config
        self.objective = (
            objective
            if objective is not None
            else get_objective(config.objective, **config.objective_params)
        )
        self.cost = cost if cost is not None else get_cost(config.cost, **config.cost_params)
        self.dim = self.objective.dim
        self.domain = np.asarray(self.objective.domain, dtype=float)
        self.trace = Trace(self.dim, meta={"mode": config.mode, "seed": config.seed})
        self.records = []  # (x, s, y, eval_cost_s)
        self.overheads = []  # per executed optimization step
        self.cum_eval = 0.0
        self.cum_over = 0.0
        self.step_index = 0
        self.aborted = False
        self._warm = None
        self._last_rec = None
        self._cached_hps = None

    # -- seeds ---------------------------------------------------------

    def _seed(self, *tags):
        ss = np.random.SeedSequence([int(self.config.seed)] + [int(t) for t in tags])
        return int(ss.generate_state(1)[0])

    # -- state ---------------------------------------------------------

    def state_hash(self):
        h = hashlib.sha256()
        for x, s, y, c in self.records:
            h.update(np.asarray(x, dtype=float).tobytes())
            h.update(np.float64(s).tobytes())
            h.update(np.float64(y).tobytes())
            h.update(np.float64(c).tobytes())
        h.update(np.float64(self.cum_eval).tobytes())
        h.update(np.float64(self.cum_total).tobytes())
        return h.hexdigest()

    def _observations(self):
        aug = self.config.mode == "envpes"
        obs = []
        for x, s, y, _ in self.records:
            u = np.append(x, s) if aug else np.asarray(x, dtype=float)
            obs.append(Observation(u, y=y))
        return obs

    def _model_bounds(self):
        if self.config.mode == "envpes":
            return np.vstack([self.domain, [0.0, 1.0]])
        return self.domain

    def _fit_model(self, seed_tag):
        obs = self._observations()
        X = np.array([o.x for o in obs])
        y = np.array([o.y for o in obs])
        prior = HyperPrior.from_data(
            X, y, bounds=self._model_bounds(), noise_sd=self.config.noise_sd
        )
        hps = fit_hyper_posterior(
            obs,
            prior,
            k=self.config.k_hyper,
            burn_in=self.config.burn_in,
            thin=self.config.thin,
            seed=self._seed(seed_tag, 1),
            warm_start=self._warm,
        )
        self._warm = hps.chain_end
        return hps

    # -- initialization ------------------------------------------------

    def init_design(self):
        rng = np.random.default_rng(self._seed(0, 0))
        n = self.config.n_init
        if self.config.mode == "envpes":
            n_x = -(-n // len(_INIT_S_LEVELS))  # ceil
            X = self.domain[:, 0] + (self.domain[:, 1] - self.domain[:, 0]) * rng.random(
                (n_x, self.dim)
            )
            pairs = [(X[i], s) for s in _INIT_S_LEVELS for i in range(n_x)]
            return pairs[:n]
        X = self.domain[:, 0] + (self.domain[:, 1] - self.domain[:, 0]) * rng.random(
            (n, self.dim)
        )
        return [(X[i], 0.0) for i in range(n)]

    def _evaluate(self, x, s):
        y = self.objective.evaluate(x, s)
        cost_s = self.cost(s) * self.config.sim_scale
        return y, cost_s

    @property
    def cum_total(self):
        # Kept as a derived quantity so the row-level identity
        # total == eval + sum(overhead) holds exactly, not just to rounding.
        return self.cum_eval + self.cum_over

    def _append_row(self, x, s, y, cost_s, overhead_s, rec, flags):
        self.cum_eval += cost_s
        self.cum_over += overhead_s
        x_rec, rec_mean, rec_true, ir, amr = rec
        self.trace.rows.append(
            TraceRow(
                step=self.step_index,
                x=np.asarray(x, dtype=float).copy(),
                s=float(s),
                y=float(y),
                eval_cost_s=float(cost_s),
                overhead_s=float(overhead_s),
                x_rec=x_rec,
                rec_mean=rec_mean,
                rec_true=rec_true,
                immediate_regret=ir,
                argmin_regret=amr,
                cumulative_eval_cost_s=self.cum_eval,
                cumulative_total_cost_s=self.cum_total,
                flags=tuple(flags),
            )
        )
        self.step_index += 1

    def initialize(self):
        if self.records:
            raise ConfigError("initialize() called twice")
        for x, s in self.init_design():
            y, cost_s = self._evaluate(x, s)
            self.records.append((np.asarray(x, float), float(s), float(y), cost_s))
            no_rec = (None, np.nan, np.nan, np.nan, np.nan)
            self._append_row(x, s, y, cost_s, 0.0, no_rec, ["init"])
        if self.cum_total >= self.config.budget_s:
            self.trace.meta["budget_exhausted_at_init"] = True
            if self.trace.rows:
                last = self.trace.rows[-1]
                self.trace.rows[-1] = replace(
                    last, flags=last.flags + ("budget_exhausted_at_init",)
                )

    # -- recommendation ------------------------------------------------

    def _best_observed_s0(self):
        """(x, y) of the best full-fidelity observation, or None."""
        best = None
        for x, s, y, _ in self.records:
            if s == 0.0 and (best is None or y < best[1]):
                best = (x, y)
        return best

    def recommend(self, hps):
        """Recommended full-fidelity point and its predicted value.

        Pure with respect to optimizer state: uses only the fitted model and
        a seed derived from the current step index.
        """
        flags = []
        if self.config.recommend_mode == "argmin":
            best = self._best_observed_s0()
            if best is None:
                best = (min(self.records, key=lambda r: r[2])[0], np.nan)
                flags.append("rec_fallback")
            x_rec = np.asarray(best[0], dtype=float).copy()
        else:
            model = _SliceView(hps.gps) if self.config.mode == "envpes" else hps
            x_rec = None
            try:
                cands = find_posterior_minima(
                    model, self.domain, seed=self._seed(self.step_index, 7)
                )
                if cands:
                    best_c = min(cands, key=lambda c: c.c)
                    x_rec = best_c.x_c
            except Exception:
                pass
            if x_rec is None:
                flags.append("rec_fallback")
                best = self._best_observed_s0()
                if best is not None:
                    x_rec = np.asarray(best[0], dtype=float).copy()
                else:
                    # No full-fidelity data yet: project the best observed
                    # point down to s = 0.
                    x_rec = np.asarray(
                        min(self.records, key=lambda r: r[2])[0], dtype=float
                    ).copy()
        mp = MarginalPosterior(hps)
        if self.config.mode == "envpes":
            q = np.append(x_rec, 0.0)[None]
        else:
            q = x_rec[None]
        rec_mean = float(mp.moments(q)[0][0])
        return x_rec, rec_mean, flags

    def _regrets(self, x_rec):
        rec_true = self.objective.evaluate(x_rec, 0.0)
        f_star = self.objective.f_star
        ir = rec_true - f_star if f_star is not None else np.nan
        best = self._best_observed_s0()
        if best is not None and f_star is not None:
            amr = best[1] - f_star
        else:
            amr = np.nan
        return rec_true, ir, amr

    # -- selection -----------------------------------------------------

    def _select_ei(self, hps, seed):
        mp = MarginalPosterior(hps)
        best = min(y for _, _, y, _ in self.records)
        dim = self.dim
        sob = qmc.Sobol(dim, scramble=True, seed=seed)
        n = 100 * dim
        n_pow2 = 1 << (n - 1).bit_length()
        cands = qmc.scale(sob.random(n_pow2)[:n], self.domain[:, 0], self.domain[:, 1])
        ei = mp.expected_improvement(cands, best)
        x0 = cands[int(np.argmax(ei))]

        def neg_ei(x):
            x = np.clip(x, self.domain[:, 0], self.domain[:, 1])
            return -float(mp.expected_improvement(x[None], best)[0])

        res = minimize(
            neg_ei, x0, method="Nelder-Mead",
            options={"maxiter": 50 * dim, "xatol": 1e-4, "fatol": 1e-12},
        )
        x = np.clip(res.x, self.domain[:, 0], self.domain[:, 1])
        if -res.fun < ei.max():
            x = x0
        return x, 0.0, []

    def _select_entropy(self, hps, seed):
        flags = []
        aug = self.config.mode == "envpes"
        view = _SliceView(hps.gps) if aug else hps
        support = wlh_support(
            view, self.domain, self.config.m_support, seed=self._seed(seed, 2)
        )
        flags += sorted(k for k, v in support.flags.items() if v is True)
        draw_minimizer_samples(
            view, support, self.config.n_min_samples, seed=self._seed(seed, 3)
        )
        ctx = build_context(
            hps.gps,
            support,
            self.dim,
            n_min_draws=self.config.n_min_draws,
            global_min_constraint=not aug,
            seed=self._seed(seed, 4),
        )
        divisor_fn = None
        if aug:
            recs = [(np.append(x, s), c) for x, s, y, c in self.records]
            costgp = fit_cost_gp(recs, seed=self._seed(seed, 5))
            over = fit_overhead_map(self.overheads, seed=self._seed(seed, 6))
            if over.prior_only:
                flags.append("overhead_prior_only")
            if self._last_rec is not None:
                c_eval = costgp.predict_one(np.append(self._last_rec, 0.0))
            else:
                xs0 = np.column_stack(
                    [np.array([r[0] for r in self.records]), np.zeros(len(self.records))]
                )
                c_eval = float(np.mean(costgp.predict(xs0)))
            b_rem = max(self.config.budget_s - self.cum_total, 0.0)
            divisor_fn = lambda u: acquisition_divisor(
                costgp, over, u, b_rem, c_eval
            )
            box = np.vstack([self.domain, [0.0, 1.0]])
            point, info = optimize_acquisition(
                ctx, box, divisor_fn,
                seed=self._seed(seed, 8),
                support_points=support.points,
            )
            x, s = point[:-1], float(point[-1])
        else:
            point, info = optimize_acquisition(
                ctx, self.domain,
                seed=self._seed(seed, 8),
                support_points=support.points,
            )
            x, s = point, 0.0
        if info.get("fallback_max_variance"):
            flags.append("fallback_max_variance")
        if ctx.stats.get("ep_nonconverged", 0) > 0:
            flags.append("ep_nonconverged")
        return x, s, flags

    def _step_attempt(self, attempt):
        cfg = self.config
        t0 = time.perf_counter()
        tag = self.step_index * 4 + attempt
        # The refit done for the previous step's offline recommendation
        # already covers the current data, so reuse it here.
        if self._cached_hps is not None and attempt == 0:
            hps = self._cached_hps
        else:
            hps = self._fit_model(tag)
        if cfg.mode == "ei":
            x, s, flags = self._select_ei(hps, self._seed(tag, 2))
        else:
            x, s, flags = self._select_entropy(hps, tag)
        wall = time.perf_counter() - t0
        if cfg.overhead_mode == "synthetic":
            o0, o1, o2 = cfg.overhead_params
            n = len(self.overheads)
            overhead_s = float(o0 + o1 * n**o2)
        else:
            overhead_s = wall
        if attempt > 0:
            flags = flags + ["retried"]

        y, cost_s = self._evaluate(x, s)
        self.records.append((np.asarray(x, float), float(s), float(y), cost_s))
        self.overheads.append(overhead_s)

        # Offline reporting: recommendation and regret are not charged.
        hps_post = self._fit_model(tag + 2)
        self._cached_hps = hps_post
        x_rec, rec_mean, rflags = self.recommend(hps_post)
        rec_true, ir, amr = self._regrets(x_rec)
        self._last_rec = x_rec
        self._append_row(
            x, s, y, cost_s, overhead_s,
            (x_rec, rec_mean, rec_true, ir, amr), flags + rflags,
        )

    def _snapshot(self):
        return (
            list(self.records),
            list(self.overheads),
            self.cum_eval,
            self.cum_over,
            self.step_index,
            self._warm,
            self._cached_hps,
            self._last_rec,
            len(self.trace.rows),
        )

    def _restore(self, snap):
        (
            self.records,
            self.overheads,
            self.cum_eval,
            self.cum_over,
            self.step_index,
            self._warm,
            _,
            self._last_rec,
            n_rows,
        ) = snap
        self._cached_hps = None  # force a fresh fit with the retry seed
        del self.trace.rows[n_rows:]

    def step(self):
        """Run one selection + evaluation.  Returns False on abort."""
        snap = self._snapshot()
        try:
            self._step_attempt(0)
            return True
        except Exception:
            self._restore(snap)
            try:
                self._step_attempt(1)
                return True
            except Exception as second:
                self._restore(snap)
                self.aborted = True
                self.trace.meta["aborted"] = f"{type(second).__name__}: {second}"
                return False

    def run(self):
        if not self.records:
            self.initialize()
        n_opt = 0
        while (
            self.cum_total < self.config.budget_s
            and n_opt < self.config.max_steps
            and not self.aborted
        ):
            if not self.step():
                break
            n_opt += 1
        return self.trace


def run_experiment_single(config: ExperimentConfig, objective=None, cost=None):
    """Convenience wrapper: build, run, return (trace, optimizer)."""
    opt = Optimizer(config, objective=objective, cost=cost)
    trace = opt.run()
    return trace, opt
